// Static extraction of the list returned by a model-written `rank_skills`
// function. The code is tokenized with a small Python lexer and pattern
// matched; nothing is ever evaluated.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "skillmatch/reranker.hpp"

namespace skillmatch {

namespace {

enum class TokenKind { kName, kString, kNumber, kOp };

struct Token {
  TokenKind kind;
  std::string text;          // name, operator or decoded string value
  bool plain_string = true;  // false for f-strings and bytes literals
};

struct LogicalLine {
  std::size_t indent = 0;
  std::vector<Token> tokens;
  bool after_semicolon = false;
};

class LexError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

std::string decode_escapes(std::string_view body) {
  std::string out;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '\\' || i + 1 == body.size()) {
      out += body[i];
      continue;
    }
    const char c = body[++i];
    const auto hex = [&](std::size_t digits) -> std::optional<std::uint32_t> {
      if (i + digits >= body.size()) return std::nullopt;
      std::uint32_t value = 0;
      for (std::size_t k = 1; k <= digits; ++k) {
        const char h = body[i + k];
        if (!std::isxdigit(static_cast<unsigned char>(h))) return std::nullopt;
        value = value * 16 + static_cast<std::uint32_t>(std::isdigit(static_cast<unsigned char>(h))
                                                            ? h - '0'
                                                            : std::tolower(static_cast<unsigned char>(h)) - 'a' + 10);
      }
      return value;
    };
    switch (c) {
      case '\n': break;
      case '\\': out += '\\'; break;
      case '\'': out += '\''; break;
      case '"': out += '"'; break;
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case 'r': out += '\r'; break;
      case 'a': out += '\a'; break;
      case 'b': out += '\b'; break;
      case 'f': out += '\f'; break;
      case 'v': out += '\v'; break;
      case 'x':
      case 'u':
      case 'U': {
        const std::size_t digits = c == 'x' ? 2 : c == 'u' ? 4 : 8;
        if (const auto cp = hex(digits)) {
          append_utf8(out, *cp);
          i += digits;
        } else {
          out += '\\';
          out += c;
        }
        break;
      }
      default:
        if (c >= '0' && c <= '7') {
          std::uint32_t value = static_cast<std::uint32_t>(c - '0');
          for (int k = 0; k < 2 && i + 1 < body.size() && body[i + 1] >= '0' && body[i + 1] <= '7'; ++k) {
            value = value * 8 + static_cast<std::uint32_t>(body[++i] - '0');
          }
          append_utf8(out, value);
        } else {
          out += '\\';
          out += c;
        }
    }
  }
  return out;
}

// Scans the literal whose opening quote is at `i` and advances past it.
Token scan_string(std::string_view code, std::size_t& i, bool raw, bool plain) {
  const char quote = code[i];
  const bool triple = code.substr(i, 3) == std::string(3, quote);
  const std::size_t open = triple ? 3 : 1;
  std::size_t j = i + open;
  for (;;) {
    if (j >= code.size()) throw LexError("unterminated string literal");
    if (code[j] == '\\') {
      j += 2;
      continue;
    }
    if (!triple && code[j] == '\n') throw LexError("newline in string literal");
    if (triple ? code.substr(j, 3) == std::string(3, quote) : code[j] == quote) break;
    ++j;
  }
  const std::string_view body = code.substr(i + open, j - i - open);
  i = j + open;
  return {TokenKind::kString, raw ? std::string(body) : decode_escapes(body), plain};
}

bool is_name_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool is_name_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

std::vector<LogicalLine> tokenize_python(std::string_view code) {
  std::vector<LogicalLine> lines;
  LogicalLine current;
  bool have_line = false;
  int depth = 0;
  std::size_t i = 0;
  const auto flush = [&] {
    if (have_line && !current.tokens.empty()) lines.push_back(std::move(current));
    current = {};
    have_line = false;
  };
  bool at_line_start = true;
  while (i < code.size()) {
    if (at_line_start && depth == 0) {
      std::size_t column = 0;
      while (i < code.size() && (code[i] == ' ' || code[i] == '\t')) {
        column = code[i] == '\t' ? (column / 8 + 1) * 8 : column + 1;
        ++i;
      }
      at_line_start = false;
      if (!have_line) {
        current.indent = column;
        have_line = true;
      }
      continue;
    }
    const char c = code[i];
    if (c == '#') {
      while (i < code.size() && code[i] != '\n') ++i;
      continue;
    }
    if (c == '\\' && i + 1 < code.size() && (code[i + 1] == '\n' || code[i + 1] == '\r')) {
      i += code[i + 1] == '\r' && i + 2 < code.size() && code[i + 2] == '\n' ? 3 : 2;
      continue;
    }
    if (c == '\n') {
      ++i;
      if (depth == 0) {
        flush();
        at_line_start = true;
      }
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r' || c == '\f') {
      ++i;
      continue;
    }
    if (c == ';' && depth == 0) {
      const std::size_t indent = current.indent;
      flush();
      current.indent = indent;
      current.after_semicolon = true;
      have_line = true;
      ++i;
      continue;
    }
    if (is_name_start(static_cast<unsigned char>(c))) {
      std::size_t end = i;
      while (end < code.size() && is_name_char(static_cast<unsigned char>(code[end]))) ++end;
      const std::string word(code.substr(i, end - i));
      const std::string lower = util::ascii_lower(word);
      const bool prefix = word.size() <= 2 && lower.find_first_not_of("rubf") == std::string::npos;
      if (!(prefix && end < code.size() && (code[end] == '"' || code[end] == '\''))) {
        current.tokens.push_back({TokenKind::kName, word});
        i = end;
        continue;
      }
      i = end;
      current.tokens.push_back(scan_string(code, i, lower.find('r') != std::string::npos,
                                           lower.find_first_of("fb") == std::string::npos));
      continue;
    }
    if (c == '"' || c == '\'') {
      current.tokens.push_back(scan_string(code, i, false, true));
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t end = i;
      while (end < code.size() && (std::isalnum(static_cast<unsigned char>(code[end])) || code[end] == '.' ||
                                   code[end] == '_')) {
        ++end;
      }
      current.tokens.push_back({TokenKind::kNumber, std::string(code.substr(i, end - i))});
      i = end;
      continue;
    }
    if (c == '(' || c == '[' || c == '{') ++depth;
    if (c == ')' || c == ']' || c == '}') depth = std::max(0, depth - 1);
    std::string op(1, c);
    if (i + 1 < code.size()) {
      const char d = code[i + 1];
      if ((d == '=' && std::string_view("=!<>+-*/%&|^:@").find(c) != std::string_view::npos) ||
          (c == '-' && d == '>') || (c == '*' && d == '*') || (c == '/' && d == '/')) {
        op += d;
      }
    }
    current.tokens.push_back({TokenKind::kOp, op});
    i += op.size();
  }
  flush();
  return lines;
}

struct FencedBlock {
  std::string_view code;
};

std::vector<FencedBlock> fenced_blocks(std::string_view text) {
  std::vector<FencedBlock> blocks;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    std::size_t body_start = text.find('\n', open);
    if (body_start == std::string_view::npos) break;
    ++body_start;
    std::size_t close = text.find("```", body_start);
    const std::size_t body_end = close == std::string_view::npos ? text.size() : close;
    blocks.push_back({text.substr(body_start, body_end - body_start)});
    if (close == std::string_view::npos) break;
    pos = close + 3;
  }
  return blocks;
}

bool is_op(const Token& token, std::string_view op) { return token.kind == TokenKind::kOp && token.text == op; }
bool is_name(const Token& token, std::string_view name) {
  return token.kind == TokenKind::kName && token.text == name;
}

// Parses `[ "a", "b", ]` occupying exactly tokens[begin, end).
std::optional<std::vector<std::string>> literal_list(const std::vector<Token>& tokens, std::size_t begin,
                                                     std::size_t end) {
  if (end - begin < 2 || !is_op(tokens[begin], "[") || !is_op(tokens[end - 1], "]")) return std::nullopt;
  std::vector<std::string> values;
  bool expect_value = true;
  for (std::size_t i = begin + 1; i + 1 < end; ++i) {
    const Token& token = tokens[i];
    if (expect_value) {
      if (token.kind != TokenKind::kString || !token.plain_string) return std::nullopt;
      values.push_back(token.text);
      expect_value = false;
    } else {
      if (!is_op(token, ",")) return std::nullopt;
      expect_value = true;
    }
  }
  return values;
}

std::vector<std::string> extract_from_block(std::string_view code) {
  std::vector<LogicalLine> lines;
  try {
    lines = tokenize_python(code);
  } catch (const LexError& e) {
    throw ParseFailure(ParseFailureKind::kNoLiteralList, fmt::format("cannot tokenize code block: {}", e.what()),
                       std::string(code));
  }
  std::size_t def_line = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& tokens = lines[i].tokens;
    if (tokens.size() >= 2 && is_name(tokens[0], "def") && is_name(tokens[1], "rank_skills")) {
      def_line = i;
      break;
    }
  }
  if (def_line == lines.size()) {
    throw ParseFailure(ParseFailureKind::kNoRankFunction, "code block does not define rank_skills",
                       std::string(code));
  }

  // Body statements: trailing statement on the def line (after the colon
  // that closes the signature), then every deeper-indented line.
  std::vector<LogicalLine> body;
  {
    const auto& def_tokens = lines[def_line].tokens;
    int depth = 0;
    for (std::size_t t = 2; t < def_tokens.size(); ++t) {
      const Token& token = def_tokens[t];
      if (is_op(token, "(") || is_op(token, "[") || is_op(token, "{")) ++depth;
      if (is_op(token, ")") || is_op(token, "]") || is_op(token, "}")) --depth;
      if (depth == 0 && is_op(token, ":")) {
        if (t + 1 < def_tokens.size()) {
          body.push_back({lines[def_line].indent + 1,
                          std::vector<Token>(def_tokens.begin() + static_cast<std::ptrdiff_t>(t + 1), def_tokens.end()),
                          false});
        }
        break;
      }
    }
  }
  const std::size_t def_indent = lines[def_line].indent;
  std::size_t next = def_line + 1;
  for (; next < lines.size() && lines[next].after_semicolon && lines[next].indent == def_indent; ++next) {
    body.push_back({def_indent + 1, lines[next].tokens, false});
  }
  for (; next < lines.size() && lines[next].indent > def_indent; ++next) body.push_back(lines[next]);
  if (body.empty()) {
    throw ParseFailure(ParseFailureKind::kNoLiteralList, "rank_skills has an empty body", std::string(code));
  }

  const std::size_t base_indent = body.front().indent;
  std::size_t return_line = body.size();
  for (std::size_t i = body.size(); i-- > 0;) {
    if (!body[i].tokens.empty() && is_name(body[i].tokens[0], "return")) {
      return_line = i;
      break;
    }
  }
  if (return_line == body.size()) {
    throw ParseFailure(ParseFailureKind::kNoLiteralList, "rank_skills has no return statement", std::string(code));
  }
  const auto& ret = body[return_line];
  if (ret.indent != base_indent) {
    throw ParseFailure(ParseFailureKind::kNoLiteralList, "rank_skills returns from inside a nested block",
                       std::string(code));
  }
  for (std::size_t i = 0; i < return_line; ++i) {
    if (!body[i].tokens.empty() && is_name(body[i].tokens[0], "return")) {
      throw ParseFailure(ParseFailureKind::kNoLiteralList, "rank_skills has more than one return statement",
                         std::string(code));
    }
  }
  if (auto values = literal_list(ret.tokens, 1, ret.tokens.size())) return *values;

  if (ret.tokens.size() == 2 && ret.tokens[1].kind == TokenKind::kName) {
    const std::string& name = ret.tokens[1].text;
    std::optional<std::vector<std::string>> bound;
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (i == return_line) continue;
      const auto& tokens = body[i].tokens;
      bool mentions = false;
      for (const auto& token : tokens) mentions = mentions || is_name(token, name);
      if (!mentions) continue;
      const bool assignment = i < return_line && body[i].indent == base_indent && tokens.size() >= 3 &&
                              is_name(tokens[0], name) && is_op(tokens[1], "=");
      if (!assignment || bound) {
        throw ParseFailure(ParseFailureKind::kNoLiteralList,
                           fmt::format("'{}' is not bound by a single straight-line list assignment", name),
                           std::string(code));
      }
      bound = literal_list(tokens, 2, tokens.size());
      if (!bound) {
        throw ParseFailure(ParseFailureKind::kNoLiteralList,
                           fmt::format("'{}' is not assigned a list of string literals", name), std::string(code));
      }
    }
    if (bound) return *bound;
  }
  throw ParseFailure(ParseFailureKind::kNoLiteralList, "rank_skills does not return a list of string literals",
                     std::string(code));
}

}  // namespace

std::vector<std::string> extract_rank_skills_literals(std::string_view text) {
  const auto blocks = fenced_blocks(text);
  if (blocks.empty()) throw ParseFailure(ParseFailureKind::kNoCodeBlock, "response has no fenced code block", std::string(text));
  for (const auto& block : blocks) {
    if (block.code.find("rank_skills") != std::string_view::npos) {
      try {
        return extract_from_block(block.code);
      } catch (const ParseFailure& failure) {
        if (failure.kind() != ParseFailureKind::kNoRankFunction) throw;
      }
    }
  }
  throw ParseFailure(ParseFailureKind::kNoRankFunction, "no fenced code block defines rank_skills", std::string(text));
}

}  // namespace skillmatch
