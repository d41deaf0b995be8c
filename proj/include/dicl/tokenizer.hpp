#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dicl::tokenizer {

/// How a real series is written as digits. Bins are fixed-width slots of
/// 10^(1-k) on the rescaled axis starting at 0, so k digits give 10^k bins.
struct NumericEncoding {
  double target_lo = 0.0;
  double target_hi = 10.0;
  int digits = 3;
  char separator = ',';
  double pad_fraction = 0.15;

  std::size_t bin_count() const;
  double bin_width() const;  // in rescaled units
  void validate() const;
};

/// Affine map from source units onto [target_lo, target_hi], fitted on the
/// padded range of a context.
struct SeriesRescale {
  double source_min = 0.0;  // after padding
  double source_max = 1.0;
  double scale = 1.0;       // rescaled = (x - source_min) * scale + offset
  double offset = 0.0;

  double to_rescaled(double x) const { return (x - source_min) * scale + offset; }
  double to_source(double y) const { return (y - offset) / scale + source_min; }

  static SeriesRescale identity();
};

SeriesRescale fit_rescale(std::span<const double> series, const NumericEncoding& enc);

struct TokenStream {
  std::string text;
  std::vector<int> bins;
  std::size_t clamped = 0;  // values that fell outside the bin range
};

/// Bin id of one source value; out-of-range values are clamped and counted.
int encode_value(double x, const SeriesRescale& rescale, const NumericEncoding& enc, std::size_t* clamped = nullptr);

TokenStream encode_series(std::span<const double> series, const SeriesRescale& rescale, const NumericEncoding& enc);

std::string format_bin(int bin, const NumericEncoding& enc);

/// Parses exactly `enc.digits` decimal digits.
int parse_token(std::string_view token, const NumericEncoding& enc);

/// Source-unit value at the bin centre.
double bin_center(int bin, const SeriesRescale& rescale, const NumericEncoding& enc);

double decode_value(std::string_view token, const SeriesRescale& rescale, const NumericEncoding& enc);

/// Splits a token stream on the separator and decodes each token.
std::vector<double> decode_series(std::string_view text, const SeriesRescale& rescale, const NumericEncoding& enc);

}  // namespace dicl::tokenizer
