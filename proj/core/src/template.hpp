#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "skillmatch/providers.hpp"

namespace skillmatch::detail {

// A transcript asset is a sequence of "[system]" / "[user]" / "[assistant]"
// marker lines, each followed by that message's text. The newline that ends
// the last line of a message belongs to the file layout, not the message.
std::vector<ChatMessage> split_transcript(std::string_view asset);

// Replaces {{name}} slots and keeps {{#name}}...{{/name}} sections only when
// `name` maps to a non-empty value. Inserted values are never rescanned.
// Unknown slots throw.
std::string render_slots(std::string_view text, const std::map<std::string, std::string>& values);

}  // namespace skillmatch::detail
