#include "cha/format.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

#include "cha/errors.hpp"

namespace cha {
namespace {

std::string chars(double v, std::chars_format fmt) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, fmt);
  return std::string(buf, res.ptr);
}

// "1e-04" -> "1e-4", "1e+03" -> "1e3"
std::string tidy_exponent(const std::string& s) {
  const auto e = s.find('e');
  if (e == std::string::npos) return s;
  std::string mant = s.substr(0, e);
  std::string exp = s.substr(e + 1);
  bool neg = false;
  if (!exp.empty() && (exp[0] == '+' || exp[0] == '-')) {
    neg = exp[0] == '-';
    exp.erase(0, 1);
  }
  while (exp.size() > 1 && exp[0] == '0') exp.erase(0, 1);
  return mant + "e" + (neg ? "-" : "") + exp;
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  std::string fixed = chars(value, std::chars_format::fixed);
  std::string sci = tidy_exponent(chars(value, std::chars_format::scientific));
  std::string best = sci.size() < fixed.size() ? sci : fixed;
  if (best.find_first_of(".e") == std::string::npos) best += ".0";
  return best;
}

double parse_double(const std::string& text) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    throw ConfigError("not a number: '" + text + "'");
  }
  if (pos != text.size()) throw ConfigError("not a number: '" + text + "'");
  return v;
}

}  // namespace cha
