#ifndef CURRICUBENCH_ERROR_HPP_
#define CURRICUBENCH_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace curricubench {

enum class Errc {
  Format,
  Label,
  Io,
  Stratify,
  Weight,
  Generation,
  Shape,
  CorruptCheckpoint,
  Transfer,
  State,
  Numeric,
  DegenerateBatch,
  Task,
  Search,
  Key,
  Empty,
  DegenerateData,
  ZeroAttention,
  EmptyMask,
  Mask,
  Validation,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void throw_error(Errc code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) throw_error(code, what);
}

}  // namespace curricubench

#endif  // CURRICUBENCH_ERROR_HPP_
