#ifndef FITR_RULE_HPP
#define FITR_RULE_HPP

#include <functional>
#include <string>
#include <utility>

#include "fitr/core.hpp"

namespace fitr {

/// A treatment rule x -> {-1,+1}, evaluated row-wise on a covariate matrix.
/// Wraps fitted decision functions (through their sign) and closed-form
/// oracle rules behind one type.
class BinaryRule {
 public:
  using Batch = std::function<Decisions(const Matrix&)>;

  BinaryRule() = default;
  BinaryRule(Batch fn, std::string name = {}) : fn_(std::move(fn)), name_(std::move(name)) {}

  /// Rule from a decision function evaluated per row; decision = sgn(value).
  static BinaryRule from_values(std::function<Vector(const Matrix&)> values, std::string name = {}) {
    return BinaryRule([values = std::move(values)](const Matrix& x) { return sgn(values(x)); },
                      std::move(name));
  }

  static BinaryRule constant(int treatment) {
    require(treatment == 1 || treatment == -1, "constant rule needs a treatment in {-1,+1}");
    return BinaryRule([treatment](const Matrix& x) { return Decisions::Constant(x.rows(), treatment); },
                      treatment > 0 ? "all(+1)" : "all(-1)");
  }

  BinaryRule negated() const {
    auto fn = fn_;
    return BinaryRule([fn](const Matrix& x) -> Decisions { return -fn(x); }, "-" + name_);
  }

  Decisions operator()(const Matrix& x) const {
    require(static_cast<bool>(fn_), "empty treatment rule");
    return fn_(x);
  }

  int operator()(const Vector& x) const { return (*this)(Matrix(x.transpose()))[0]; }

  const std::string& name() const noexcept { return name_; }
  explicit operator bool() const noexcept { return static_cast<bool>(fn_); }

 private:
  Batch fn_;
  std::string name_;
};

}  // namespace fitr

#endif  // FITR_RULE_HPP
