#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <boost/multiprecision/cpp_int.hpp>

namespace zpdrl::verifier {

using BigInt = boost::multiprecision::cpp_int;

enum class AnswerKind { integer, rational, decimal, symbolic };

/// A parsed final answer.
///
/// Numeric kinds keep their surface form (an integer stays an integer, a
/// decimal keeps its digit count) but all of them expose an exact reduced
/// rational value for comparison. Rationals are stored in lowest terms with a
/// positive denominator.
class AnswerValue {
 public:
  static AnswerValue integer(BigInt value);
  /// Throws std::domain_error when den == 0.
  static AnswerValue rational(BigInt num, BigInt den);
  /// value = significand * 10^exponent
  static AnswerValue decimal(BigInt significand, int exponent);
  /// `text` is normalized on construction.
  static AnswerValue symbolic(std::string_view text);

  AnswerKind kind() const { return kind_; }
  bool is_numeric() const { return kind_ != AnswerKind::symbolic; }

  // Exact value of a numeric answer (den == 1 for integers).
  const BigInt& numerator() const { return num_; }
  const BigInt& denominator() const { return den_; }

  // Decimal surface form; meaningful only for AnswerKind::decimal.
  const BigInt& significand() const { return significand_; }
  int exponent() const { return exponent_; }

  // Normalized text; meaningful only for AnswerKind::symbolic.
  const std::string& text() const { return text_; }

  /// Canonical rendering. parse_answer(render()) == *this.
  std::string render() const;

  friend bool operator==(const AnswerValue& a, const AnswerValue& b);

 private:
  AnswerValue() = default;

  AnswerKind kind_ = AnswerKind::integer;
  BigInt num_{0};
  BigInt den_{1};
  BigInt significand_{0};
  int exponent_ = 0;
  std::string text_;
};

enum class FailureReason { no_boxed_found, unparseable, mismatch };

std::string_view to_string(FailureReason reason);

struct VerifierOutcome {
  std::optional<std::string> extracted;
  std::optional<AnswerValue> parsed;
  double reward = 0.0;
  std::optional<FailureReason> failure_reason;
};

/// Content of the last `\boxed{...}` in `text`, braces matched by depth.
/// A final box that never closes yields nothing.
std::optional<std::string> extract_boxed(std::string_view text);

/// Strips `$`, `\left`/`\right`, thin spaces, outer braces and trailing
/// periods, and removes whitespace except a single space between letters.
std::string normalize_text(std::string_view raw);

/// Empty optional when the answer is empty or a fraction divides by zero.
std::optional<AnswerValue> parse_answer(std::string_view raw);

bool equivalent(const AnswerValue& a, const AnswerValue& b);

VerifierOutcome reward(std::string_view response, const AnswerValue& gold);
VerifierOutcome reward(std::string_view response, std::string_view gold);

}  // namespace zpdrl::verifier
