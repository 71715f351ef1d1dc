#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "msvar/errors.hpp"
#include "msvar/grid.hpp"
#include "msvar/labels.hpp"

namespace msvar {

/// Binary PGM (P5, one channel) or PPM (P6, three channels), maxval up to
/// 65535. Intensities are divided by maxval. Throws IoError.
Image read_image(const std::filesystem::path& path);

/// Writes P5 for one channel and P6 for three, 8-bit, values clamped to
/// [0, 1] and rounded.
void write_image(const std::filesystem::path& path, const Image& image);

/// 8-bit P5 whose gray levels are class indices (255 = ignore).
LabelMap read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const LabelMap& labels);

/// Min-max rescaled 8-bit P5 view of a field; a constant field maps to 128.
void write_field_pgm(const std::filesystem::path& path, const ScalarField& field);

/// Raw little-endian float64, row-major, no header.
void write_raw_f64(const std::filesystem::path& path, const ScalarField& field);
ScalarField read_raw_f64(const std::filesystem::path& path, std::size_t height, std::size_t width);

/// CSV with header iter,loss,data_term,tv_term and, when `with_bias` is set,
/// bias_tv_term. Reals use 17 significant digits.
void write_trace_csv(const std::filesystem::path& path, std::span<const TraceRow> trace, bool with_bias = false);

}  // namespace msvar
