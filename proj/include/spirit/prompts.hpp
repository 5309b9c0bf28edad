#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace spirit::prompts {

// Verbatim prompt templates. Placeholders are `{name}` tokens.
std::string_view painter_system();
std::string_view direct_answer();
std::string_view timely_preknowledge();
std::string_view timely_queries();
std::string_view timely_summary();
std::string_view timely_answer();

/// System message paired with the reasoner templates, which go in the user turn.
std::string_view reasoner_system();

using Bindings = std::vector<std::pair<std::string_view, std::string_view>>;

/// Single-pass substitution: text inserted for one placeholder is never
/// rescanned, so persona content containing "{...}" is left alone. Unbound
/// placeholders are kept verbatim.
std::string render(std::string_view tpl, const Bindings& bindings);

}  // namespace spirit::prompts
