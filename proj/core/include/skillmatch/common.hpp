#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace skillmatch {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable or unwritable files.
class IoError : public Error {
 public:
  using Error::Error;
};

// Input data that violates a documented format or invariant.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Bad user configuration (maps to exit status 2 in the CLI).
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class ParseFailureKind {
  kNoItems,          // generation response without any list item
  kNoList,           // reranker response without an ordered list
  kNoCodeBlock,      // code response without a fenced block
  kNoRankFunction,   // fenced block without `def rank_skills`
  kNoLiteralList,    // rank_skills does not return a list of string literals
};

std::string_view to_string(ParseFailureKind kind);

// Model output that could not be interpreted. Carries the raw text so it can
// be logged and retried.
class ParseFailure : public Error {
 public:
  ParseFailure(ParseFailureKind kind, std::string message, std::string raw);

  ParseFailureKind kind() const noexcept { return kind_; }
  const std::string& raw() const noexcept { return raw_; }

 private:
  ParseFailureKind kind_;
  std::string raw_;
};

namespace util {

std::string_view trim(std::string_view text);
std::string ascii_lower(std::string_view text);
// Trimmed, ASCII case-folded form used for label comparison.
std::string fold_label(std::string_view text);
std::vector<std::string_view> split_lines(std::string_view text);
bool starts_with_ci(std::string_view text, std::string_view prefix);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t splitmix64(std::uint64_t& state);
std::string sha256_hex(std::string_view bytes);

// English words for 0..999 ("forty", "thirty-two"); digits beyond that.
std::string number_to_words(int value);

// Unbiased draw in [0, bound) from a 64-bit engine; independent of the
// standard library's distribution implementation.
template <typename Engine>
std::uint64_t uniform_below(Engine& engine, std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform_below: bound must be positive");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t draw;
  do {
    draw = static_cast<std::uint64_t>(engine());
  } while (draw >= limit);
  return draw % bound;
}

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view contents);

// Runs body(i) for i in [0, count) on up to `jobs` threads. The first
// exception thrown by any worker is rethrown after all workers stop.
void parallel_for(std::size_t count, std::size_t jobs,
                  const std::function<void(std::size_t)>& body);

}  // namespace util
}  // namespace skillmatch
