#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dermamap {

// All recoverable failures surface as Error; the message carries the
// offending entity (record index, anchor ID, ...) where one exists.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

template <class... Args>
[[noreturn]] inline void fail(const std::string& msg) {
  throw Error(msg);
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

// Non-fatal diagnostics attached to a result (e.g. unexpected component
// counts in sticker extraction, clamped labels).
struct Warnings {
  std::vector<std::string> messages;
  bool empty() const { return messages.empty(); }
  void add(std::string m) { messages.push_back(std::move(m)); }
};

}  // namespace dermamap
