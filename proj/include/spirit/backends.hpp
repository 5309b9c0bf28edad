#pragma once

#include <memory>

#include "spirit/llm_gateway.hpp"

namespace spirit {

/// http -> HttpChatBackend; mock with {"type": "script"} -> ScriptedMockBackend,
/// {"type": "marker"} -> synth::MarkerMockBackend.
std::unique_ptr<ChatBackend> make_backend(const BackendConfig& cfg);

}  // namespace spirit
