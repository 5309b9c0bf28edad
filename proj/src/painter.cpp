#include "spirit/painter.hpp"

#include "spirit/prompts.hpp"

namespace spirit {

ChatRequest render_painter_prompt(const UserDocument& doc, double temperature) {
  if (doc.post_count == 0 || trim(doc.body).empty()) {
    throw std::invalid_argument("render_painter_prompt: empty document");
  }
  ChatRequest req;
  req.system_prompt = prompts::render(prompts::painter_system(), {{"schema", schema_template()}});
  req.user_prompt = doc.body;
  req.temperature = temperature;
  req.max_output = 8192;
  req.tag = "paint:" + doc.user_id;
  return req;
}

PaintFailure::PaintFailure(std::string user_id, const StructuredFailure& cause)
    : BackendError(fmt::format("paint {}: {}", user_id, cause.what())), user_id_(std::move(user_id)), cause_(cause) {}

PaintResult paint(const UserDocument& doc, ChatBackend& backend, const RetryPolicy& policy, double temperature) {
  auto req = render_painter_prompt(doc, temperature);
  Validator<PersonaProfile> validate = [](std::string_view text) { return parse_artifact(text); };
  try {
    auto r = complete_structured(req, backend, validate, policy);
    return PaintResult{std::move(r.value), std::move(r.receipt), std::move(r.warnings)};
  } catch (const StructuredFailure& f) {
    throw PaintFailure(doc.user_id, f);
  }
}

}  // namespace spirit
