#include "spirit/prompts.hpp"

namespace spirit::prompts {

namespace {

constexpr std::string_view kPainterSystem =
#include "templates/painter_system.inc"
    ;
constexpr std::string_view kDirect =
#include "templates/direct.inc"
    ;
constexpr std::string_view kPreknowledge =
#include "templates/timely_preknowledge.inc"
    ;
constexpr std::string_view kQueries =
#include "templates/timely_queries.inc"
    ;
constexpr std::string_view kSummary =
#include "templates/timely_summary.inc"
    ;
constexpr std::string_view kAnswer =
#include "templates/timely_answer.inc"
    ;

}  // namespace

std::string_view painter_system() { return kPainterSystem; }
std::string_view direct_answer() { return kDirect; }
std::string_view timely_preknowledge() { return kPreknowledge; }
std::string_view timely_queries() { return kQueries; }
std::string_view timely_summary() { return kSummary; }
std::string_view timely_answer() { return kAnswer; }

std::string_view reasoner_system() {
  return "You simulate one survey respondent. Follow the instructions in the user message exactly and reply with "
         "JSON only.";
}

std::string render(std::string_view tpl, const Bindings& bindings) {
  std::string out;
  out.reserve(tpl.size());
  std::size_t i = 0;
  while (i < tpl.size()) {
    if (tpl[i] == '{') {
      bool replaced = false;
      for (const auto& [name, value] : bindings) {
        if (tpl.size() - i >= name.size() + 2 && tpl.compare(i + 1, name.size(), name) == 0 &&
            tpl[i + 1 + name.size()] == '}') {
          out += value;
          i += name.size() + 2;
          replaced = true;
          break;
        }
      }
      if (replaced) continue;
    }
    out += tpl[i++];
  }
  return out;
}

}  // namespace spirit::prompts
