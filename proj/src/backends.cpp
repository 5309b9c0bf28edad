#include "spirit/backends.hpp"

#include <fmt/format.h>

#include "spirit/synth_fixtures.hpp"

namespace spirit {

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& cfg) {
  check_backend_config(cfg);
  if (cfg.kind == BackendKind::http_openai_compatible) return std::make_unique<HttpChatBackend>(cfg);
  auto type = cfg.mock.value("type", std::string("script"));
  if (type == "script") return ScriptedMockBackend::from_config(cfg);
  if (type == "marker") return synth::MarkerMockBackend::from_config(cfg);
  throw UsageError(fmt::format("mock backend: unknown type '{}'", type));
}

}  // namespace spirit
