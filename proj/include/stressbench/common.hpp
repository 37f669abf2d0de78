#pragma once

#include <stdexcept>
#include <string>

namespace stressbench {

// All recoverable failures (bad input files, violated preconditions) are
// reported with this type. Messages are meant for the CLI user.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr int kSampleRate = 16000;

}  // namespace stressbench
