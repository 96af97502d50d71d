#pragma once

#include <stdexcept>
#include <string>

namespace robunmt {

// Every failure raised by the library carries a short machine-parsable
// category (e.g. "shape-mismatch", "checkpoint-not-found") next to the
// human-readable message. The CLI prints "error: <category>: <message>".
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

}  // namespace robunmt
