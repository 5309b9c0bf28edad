#pragma once

#include "spirit/corpus.hpp"
#include "spirit/llm_gateway.hpp"
#include "spirit/persona_schema.hpp"

namespace spirit {

/// System prompt: the Painter template with the schema block inlined.
/// User prompt: the document body.
ChatRequest render_painter_prompt(const UserDocument& doc, double temperature = 0.7);

struct PaintResult {
  PersonaProfile profile;
  GenerationReceipt receipt;
  std::vector<std::string> warnings;
};

class PaintFailure : public BackendError {
 public:
  PaintFailure(std::string user_id, const StructuredFailure& cause);
  const std::string& user_id() const { return user_id_; }
  const StructuredFailure& cause() const { return cause_; }

 private:
  std::string user_id_;
  StructuredFailure cause_;
};

/// Runs the structured loop with parse_artifact as the validator.
PaintResult paint(const UserDocument& doc, ChatBackend& backend, const RetryPolicy& policy = {},
                  double temperature = 0.7);

}  // namespace spirit
