#pragma once

#include <cmath>
#include <limits>
#include <ostream>
#include <string>

namespace stsparse {

/// Extended real value in [-inf, +inf].
///
/// Comparisons are total (IEEE infinities order naturally). Plain addition of
/// opposite infinities is a programming error; the convention
/// inf + (-inf) := inf used by the subderivative sum rules is only available
/// through the explicitly named add_upper().
class ExtReal {
public:
  constexpr ExtReal() = default;
  constexpr ExtReal(double v) : v_(v) {}

  static constexpr ExtReal pos_inf() { return ExtReal(std::numeric_limits<double>::infinity()); }
  static constexpr ExtReal neg_inf() { return ExtReal(-std::numeric_limits<double>::infinity()); }

  bool is_finite() const { return std::isfinite(v_); }
  bool is_pos_inf() const { return std::isinf(v_) && v_ > 0; }
  bool is_neg_inf() const { return std::isinf(v_) && v_ < 0; }

  /// Raw value; +-inf map to IEEE infinities.
  double value() const { return v_; }

  friend bool operator==(ExtReal a, ExtReal b) { return a.v_ == b.v_; }
  friend bool operator<(ExtReal a, ExtReal b) { return a.v_ < b.v_; }
  friend bool operator<=(ExtReal a, ExtReal b) { return a.v_ <= b.v_; }
  friend bool operator>(ExtReal a, ExtReal b) { return a.v_ > b.v_; }
  friend bool operator>=(ExtReal a, ExtReal b) { return a.v_ >= b.v_; }

  /// Sum with the upper convention inf + (-inf) = inf.
  ExtReal add_upper(ExtReal other) const {
    if ((is_pos_inf() && other.is_neg_inf()) || (is_neg_inf() && other.is_pos_inf()))
      return pos_inf();
    return ExtReal(v_ + other.v_);
  }

  std::string str() const {
    if (is_pos_inf()) return "inf";
    if (is_neg_inf()) return "-inf";
    return std::to_string(v_);
  }

  friend std::ostream& operator<<(std::ostream& os, ExtReal x) { return os << x.str(); }

private:
  double v_ = 0.0;
};

}  // namespace stsparse
