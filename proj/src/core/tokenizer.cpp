#include "dicl/tokenizer.hpp"

#include "dicl/error.hpp"

#include <algorithm>
#include <cmath>

namespace dicl::tokenizer {

namespace {

// Guards floor() against representation error, e.g. 5.16 * 100 = 515.99999999999994.
constexpr double kEdgeSlack = 1e-9;

}  // namespace

std::size_t NumericEncoding::bin_count() const {
  std::size_t n = 1;
  for (int i = 0; i < digits; ++i) n *= 10;
  return n;
}

double NumericEncoding::bin_width() const { return std::pow(10.0, 1 - digits); }

void NumericEncoding::validate() const {
  require(digits >= 1 && digits <= 6, ErrorKind::InvalidArgument, "digit count must be in [1, 6]");
  require(target_lo < target_hi, ErrorKind::InvalidArgument, "target_lo must be below target_hi");
  require(target_lo >= 0.0 && target_hi <= 10.0 + 1e-12, ErrorKind::InvalidArgument,
          "target range must lie inside [0, 10]");
  require(pad_fraction >= 0.0, ErrorKind::InvalidArgument, "pad fraction must be nonnegative");
}

SeriesRescale SeriesRescale::identity() { return SeriesRescale{0.0, 10.0, 1.0, 0.0}; }

SeriesRescale fit_rescale(std::span<const double> series, const NumericEncoding& enc) {
  enc.validate();
  require(!series.empty(), ErrorKind::InvalidArgument, "cannot fit a rescale on an empty series");
  const auto [lo_it, hi_it] = std::minmax_element(series.begin(), series.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  require(std::isfinite(lo) && std::isfinite(hi), ErrorKind::InvalidArgument, "series has non-finite values");

  SeriesRescale r;
  const double span = hi - lo;
  if (!(span > 0.0)) {
    // Constant context: centre it in the target range with a unit-scale window.
    const double half = std::max(std::abs(lo), 1.0);
    r.source_min = lo - half;
    r.source_max = lo + half;
  } else {
    r.source_min = lo - enc.pad_fraction * span;
    r.source_max = hi + enc.pad_fraction * span;
  }
  r.scale = (enc.target_hi - enc.target_lo) / (r.source_max - r.source_min);
  r.offset = enc.target_lo;
  return r;
}

int encode_value(double x, const SeriesRescale& rescale, const NumericEncoding& enc, std::size_t* clamped) {
  const double y = rescale.to_rescaled(x);
  const double per_unit = std::pow(10.0, enc.digits - 1);
  const auto top = static_cast<double>(enc.bin_count() - 1);
  const double raw = std::floor(y * per_unit + kEdgeSlack);
  if (!(raw >= 0.0) || raw > top) {
    // The exact upper edge of the range belongs to the top bin.
    const bool at_top_edge = raw == top + 1.0 && y <= enc.target_hi + kEdgeSlack;
    if (clamped && !at_top_edge) ++*clamped;
    return raw > top ? static_cast<int>(top) : 0;
  }
  return static_cast<int>(raw);
}

TokenStream encode_series(std::span<const double> series, const SeriesRescale& rescale, const NumericEncoding& enc) {
  TokenStream out;
  out.bins.reserve(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const int b = encode_value(series[i], rescale, enc, &out.clamped);
    out.bins.push_back(b);
    if (i) out.text.push_back(enc.separator);
    out.text += format_bin(b, enc);
  }
  return out;
}

std::string format_bin(int bin, const NumericEncoding& enc) {
  std::string s = std::to_string(bin);
  if (s.size() < static_cast<std::size_t>(enc.digits)) s.insert(0, static_cast<std::size_t>(enc.digits) - s.size(), '0');
  return s;
}

int parse_token(std::string_view token, const NumericEncoding& enc) {
  require(token.size() == static_cast<std::size_t>(enc.digits), ErrorKind::Parse,
          "token '" + std::string(token) + "' must have exactly " + std::to_string(enc.digits) + " digits");
  int v = 0;
  for (char c : token) {
    require(c >= '0' && c <= '9', ErrorKind::Parse, "token '" + std::string(token) + "' has a non-digit character");
    v = v * 10 + (c - '0');
  }
  return v;
}

double bin_center(int bin, const SeriesRescale& rescale, const NumericEncoding& enc) {
  return rescale.to_source((static_cast<double>(bin) + 0.5) * enc.bin_width());
}

double decode_value(std::string_view token, const SeriesRescale& rescale, const NumericEncoding& enc) {
  return bin_center(parse_token(token, enc), rescale, enc);
}

std::vector<double> decode_series(std::string_view text, const SeriesRescale& rescale, const NumericEncoding& enc) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(enc.separator, start);
    if (end == std::string_view::npos) end = text.size();
    out.push_back(decode_value(text.substr(start, end - start), rescale, enc));
    start = end + 1;
  }
  return out;
}

}  // namespace dicl::tokenizer
