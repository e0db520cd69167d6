#ifndef HYPORATE_ERRORS_HPP_
#define HYPORATE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace hyporate {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct NonFiniteField : Error {
  using Error::Error;
};
struct ToleranceExceeded : Error {
  ToleranceExceeded(const std::string& msg, double res) : Error(msg), residual(res) {}
  double residual;
};
struct RankDeficientSpan : Error {
  using Error::Error;
};
struct SingularFrame : Error {
  using Error::Error;
};
struct StructureConditionViolated : Error {
  using Error::Error;
};
struct NonPositiveDiffusion : Error {
  using Error::Error;
};
struct SingularMass : Error {
  using Error::Error;
};
struct SingularBlock : Error {
  using Error::Error;
};
struct EmptyRange : Error {
  using Error::Error;
};
struct StencilOutOfDomain : Error {
  using Error::Error;
};
struct NonPositiveDensity : Error {
  using Error::Error;
};
struct CflViolation : Error {
  using Error::Error;
};
struct NegativeDensity : Error {
  using Error::Error;
};
struct ConfigParse : Error {
  using Error::Error;
};

}  // namespace hyporate

#endif  // HYPORATE_ERRORS_HPP_
