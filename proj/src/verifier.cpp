#include "zpdrl/verifier.hpp"

#include <cctype>
#include <stdexcept>

namespace zpdrl::verifier {

namespace {

bool is_letter(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

BigInt pow10(int n) {
  BigInt r = 1;
  for (int i = 0; i < n; ++i) r *= 10;
  return r;
}

void reduce(BigInt& num, BigInt& den) {
  if (den < 0) {
    num = -num;
    den = -den;
  }
  BigInt g = boost::multiprecision::gcd(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
}

// Removes `\name` where the command is not followed by another letter, so
// `\left(` is stripped but `\leftarrow` survives.
void erase_command(std::string& s, std::string_view name) {
  std::size_t pos = 0;
  while ((pos = s.find(name, pos)) != std::string::npos) {
    const std::size_t end = pos + name.size();
    if (end < s.size() && is_letter(s[end])) {
      pos = end;
      continue;
    }
    s.erase(pos, name.size());
  }
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

// True when s is `{...}` and the opening brace closes at the very end.
bool wrapped_in_braces(std::string_view s) {
  if (s.size() < 2 || s.front() != '{' || s.back() != '}') return false;
  int depth = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size() && (s[i + 1] == '{' || s[i + 1] == '}')) {
      ++i;
      continue;
    }
    if (s[i] == '{') ++depth;
    if (s[i] == '}') {
      --depth;
      if (depth == 0 && i + 1 != s.size()) return false;
    }
  }
  return depth == 0;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_space(s[i])) {
      out.push_back(s[i++]);
      continue;
    }
    while (i < s.size() && is_space(s[i])) ++i;
    if (!out.empty() && i < s.size() && is_letter(out.back()) && is_letter(s[i])) out.push_back(' ');
  }
  return out;
}

struct Scanner {
  std::string_view s;
  std::size_t pos = 0;

  bool done() const { return pos == s.size(); }
  bool eat(char c) {
    if (pos < s.size() && s[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }
  bool eat(std::string_view word) {
    if (s.substr(pos, word.size()) == word) {
      pos += word.size();
      return true;
    }
    return false;
  }
  int sign() {
    if (eat('-')) return -1;
    eat('+');
    return 1;
  }
  std::string_view digits() {
    const std::size_t start = pos;
    while (pos < s.size() && is_digit(s[pos])) ++pos;
    return s.substr(start, pos - start);
  }
};

// cpp_int reads a leading 0 as an octal prefix, so zeros are stripped first.
BigInt to_bigint(std::string_view digits) {
  const auto first = digits.find_first_not_of('0');
  if (first == std::string_view::npos) return 0;
  return BigInt(std::string(digits.substr(first)));
}

// [+-]? digits ( . digits? )? | [+-]? . digits
std::optional<AnswerValue> parse_plain_number(std::string_view s) {
  Scanner sc{s};
  const int sgn = sc.sign();
  const auto whole = sc.digits();
  if (sc.done()) {
    if (whole.empty()) return std::nullopt;
    return AnswerValue::integer(sgn * to_bigint(whole));
  }
  if (!sc.eat('.')) return std::nullopt;
  const auto frac = sc.digits();
  if (!sc.done() || (whole.empty() && frac.empty())) return std::nullopt;
  std::string all(whole);
  all += frac;
  return AnswerValue::decimal(sgn * to_bigint(all), -static_cast<int>(frac.size()));
}

enum class FracParse { not_a_fraction, zero_denominator };

struct Fraction {
  std::optional<AnswerValue> value;
  FracParse status = FracParse::not_a_fraction;
};

Fraction parse_fraction(std::string_view s) {
  Scanner sc{s};
  const int outer = sc.sign();
  BigInt num, den;
  if (sc.eat("\\frac{") || sc.eat("\\dfrac{") || sc.eat("\\tfrac{")) {
    const int sn = sc.sign();
    const auto a = sc.digits();
    if (a.empty() || !sc.eat("}{")) return {};
    const int sd = sc.sign();
    const auto b = sc.digits();
    if (b.empty() || !sc.eat('}') || !sc.done()) return {};
    num = outer * sn * to_bigint(a);
    den = sd * to_bigint(b);
  } else {
    const auto a = sc.digits();
    if (a.empty() || !sc.eat('/')) return {};
    const auto b = sc.digits();
    if (b.empty() || !sc.done()) return {};
    num = outer * to_bigint(a);
    den = to_bigint(b);
  }
  if (den == 0) return {std::nullopt, FracParse::zero_denominator};
  return {AnswerValue::rational(num, den), FracParse::not_a_fraction};
}

}  // namespace

AnswerValue AnswerValue::integer(BigInt value) {
  AnswerValue v;
  v.kind_ = AnswerKind::integer;
  v.num_ = std::move(value);
  v.den_ = 1;
  return v;
}

AnswerValue AnswerValue::rational(BigInt num, BigInt den) {
  if (den == 0) throw std::domain_error("rational with zero denominator");
  reduce(num, den);
  AnswerValue v;
  v.kind_ = AnswerKind::rational;
  v.num_ = std::move(num);
  v.den_ = std::move(den);
  return v;
}

AnswerValue AnswerValue::decimal(BigInt significand, int exponent) {
  // A decimal always shows at least one fractional digit.
  if (exponent >= 0) {
    significand *= pow10(exponent + 1);
    exponent = -1;
  }
  AnswerValue v;
  v.kind_ = AnswerKind::decimal;
  v.significand_ = significand;
  v.exponent_ = exponent;
  v.num_ = std::move(significand);
  v.den_ = pow10(-exponent);
  reduce(v.num_, v.den_);
  return v;
}

AnswerValue AnswerValue::symbolic(std::string_view text) {
  AnswerValue v;
  v.kind_ = AnswerKind::symbolic;
  v.text_ = normalize_text(text);
  return v;
}

std::string AnswerValue::render() const {
  switch (kind_) {
    case AnswerKind::integer:
      return num_.str();
    case AnswerKind::rational:
      return num_.str() + "/" + den_.str();
    case AnswerKind::decimal: {
      const bool negative = significand_ < 0;
      std::string digits = BigInt(boost::multiprecision::abs(significand_)).str();
      const auto frac = static_cast<std::size_t>(-exponent_);
      if (digits.size() <= frac) digits.insert(0, frac - digits.size() + 1, '0');
      digits.insert(digits.size() - frac, ".");
      return negative ? "-" + digits : digits;
    }
    case AnswerKind::symbolic:
      return text_;
  }
  return {};
}

bool operator==(const AnswerValue& a, const AnswerValue& b) {
  if (a.kind_ != b.kind_) return false;
  switch (a.kind_) {
    case AnswerKind::integer:
    case AnswerKind::rational:
      return a.num_ == b.num_ && a.den_ == b.den_;
    case AnswerKind::decimal:
      return a.significand_ == b.significand_ && a.exponent_ == b.exponent_;
    case AnswerKind::symbolic:
      return a.text_ == b.text_;
  }
  return false;
}

std::string_view to_string(FailureReason reason) {
  switch (reason) {
    case FailureReason::no_boxed_found:
      return "no-boxed-found";
    case FailureReason::unparseable:
      return "unparseable";
    case FailureReason::mismatch:
      return "mismatch";
  }
  return "unknown";
}

std::optional<std::string> extract_boxed(std::string_view text) {
  static constexpr std::string_view open = "\\boxed{";
  const std::size_t start = text.rfind(open);
  if (start == std::string_view::npos) return std::nullopt;
  const std::size_t body = start + open.size();
  int depth = 1;
  for (std::size_t i = body; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\\' && i + 1 < text.size() && (text[i + 1] == '{' || text[i + 1] == '}')) {
      ++i;
      continue;
    }
    if (c == '{') ++depth;
    if (c == '}' && --depth == 0) return std::string(text.substr(body, i - body));
  }
  return std::nullopt;
}

std::string normalize_text(std::string_view raw) {
  std::string s(raw);
  replace_all(s, "$", "");
  erase_command(s, "\\left");
  erase_command(s, "\\right");
  for (std::string_view thin : {"\\,", "\\;", "\\:", "\\!"}) replace_all(s, thin, " ");
  replace_all(s, "\\ ", " ");
  replace_all(s, "\\%", "%");
  replace_all(s, "\\dfrac", "\\frac");
  replace_all(s, "\\tfrac", "\\frac");
  s = collapse_whitespace(s);
  for (;;) {
    const std::size_t before = s.size();
    while (!s.empty() && s.back() == '.') s.pop_back();
    if (wrapped_in_braces(s)) s = s.substr(1, s.size() - 2);
    if (s.size() == before) break;
  }
  return s;
}

std::optional<AnswerValue> parse_answer(std::string_view raw) {
  const std::string s = normalize_text(raw);
  if (s.empty()) return std::nullopt;

  if (s.back() == '%') {
    if (auto x = parse_plain_number(std::string_view(s).substr(0, s.size() - 1))) {
      return AnswerValue::rational(x->numerator(), x->denominator() * 100);
    }
    return AnswerValue::symbolic(s);
  }
  if (auto x = parse_plain_number(s)) return x;
  auto frac = parse_fraction(s);
  if (frac.value) return frac.value;
  if (frac.status == FracParse::zero_denominator) return std::nullopt;
  return AnswerValue::symbolic(s);
}

bool equivalent(const AnswerValue& a, const AnswerValue& b) {
  if (a.is_numeric() != b.is_numeric()) return false;
  if (!a.is_numeric()) return a.text() == b.text();
  return a.numerator() == b.numerator() && a.denominator() == b.denominator();
}

VerifierOutcome reward(std::string_view response, const AnswerValue& gold) {
  VerifierOutcome out;
  out.extracted = extract_boxed(response);
  if (!out.extracted) {
    out.failure_reason = FailureReason::no_boxed_found;
    return out;
  }
  out.parsed = parse_answer(*out.extracted);
  if (!out.parsed) {
    out.failure_reason = FailureReason::unparseable;
    return out;
  }
  if (!equivalent(*out.parsed, gold)) {
    out.failure_reason = FailureReason::mismatch;
    return out;
  }
  out.reward = 1.0;
  return out;
}

VerifierOutcome reward(std::string_view response, std::string_view gold) {
  const auto parsed_gold = parse_answer(gold);
  if (!parsed_gold) {
    VerifierOutcome out;
    out.extracted = extract_boxed(response);
    out.failure_reason = FailureReason::unparseable;
    return out;
  }
  return reward(response, *parsed_gold);
}

}  // namespace zpdrl::verifier
