#include "template.hpp"

#include <fmt/format.h>

namespace skillmatch::detail {

std::vector<ChatMessage> split_transcript(std::string_view asset) {
  std::vector<ChatMessage> messages;
  std::string* current = nullptr;
  std::size_t start = 0;
  while (start < asset.size()) {
    std::size_t end = asset.find('\n', start);
    if (end == std::string_view::npos) end = asset.size();
    const std::string_view line = asset.substr(start, end - start);
    std::optional<Role> marker;
    if (line.size() > 2 && line.front() == '[' && line.back() == ']') {
      marker = parse_role(line.substr(1, line.size() - 2));
    }
    if (marker) {
      if (current && !current->empty() && current->back() == '\n') current->pop_back();
      messages.push_back({*marker, {}});
      current = &messages.back().content;
    } else {
      if (!current) throw Error("prompt asset must start with a role marker");
      current->append(asset.substr(start, std::min(end + 1, asset.size()) - start));
    }
    start = end + 1;
  }
  if (current && !current->empty() && current->back() == '\n') current->pop_back();
  return messages;
}

std::string render_slots(std::string_view text, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t open = text.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    out.append(text.substr(pos, open - pos));
    const std::size_t close = text.find("}}", open + 2);
    if (close == std::string_view::npos) throw Error("unterminated template slot");
    const std::string_view tag = text.substr(open + 2, close - open - 2);
    if (!tag.empty() && tag.front() == '#') {
      const std::string name(tag.substr(1));
      const std::string end_tag = "{{/" + name + "}}";
      const std::size_t section_end = text.find(end_tag, close + 2);
      if (section_end == std::string_view::npos) throw Error(fmt::format("unterminated section '{}'", name));
      const auto it = values.find(name);
      if (it == values.end()) throw Error(fmt::format("unknown template section '{}'", name));
      if (!it->second.empty()) {
        out += render_slots(text.substr(close + 2, section_end - close - 2), values);
      }
      pos = section_end + end_tag.size();
      continue;
    }
    const auto it = values.find(std::string(tag));
    if (it == values.end()) throw Error(fmt::format("unknown template slot '{}'", tag));
    out += it->second;
    pos = close + 2;
  }
  return out;
}

}  // namespace skillmatch::detail
