#pragma once

// Data-parallel inner loops. Every kernel exists twice: a serial reference
// and an OpenMP version. Parallelism only ever splits independent outputs
// (rows, classes, grid points); each output is accumulated in the same order
// in both versions, so the two agree bit for bit.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "calibkit/numerics.hpp"

namespace calibkit::kernels {

/// Occupancy of one equal-width confidence bin.
struct BinSummary {
  std::size_t count = 0;
  std::size_t hits = 0;
  double confidence_sum = 0.0;
};

/// Bin id in [1, m]: the smallest i with confidence <= i/m; 0 goes to bin 1.
int bin_index(double confidence, int m);

/// Bins `confidences` (with 0/1 `hits`) into m equal-width bins. Returned
/// vector is indexed 0..m-1 for bins 1..m. Within a bin the confidences are
/// summed in ascending order so the result does not depend on sample order.
std::vector<BinSummary> summarize_bins(std::span<const double> confidences,
                                       std::span<const std::uint8_t> hits, int m);

/// sum_i (B_i/N) |A_i - C_i| over non-empty bins, in bin order.
double weighted_bin_error(std::span<const BinSummary> bins, std::size_t n);

/// Max |A_i - C_i| over non-empty bins (0 if all empty).
double max_bin_error(std::span<const BinSummary> bins);

/// Ascending-order sum; independent of the input order.
double canonical_sum(std::vector<double> values);

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix softmax_rows(const Matrix& logits);
/// class-j calibration error for every class j of a row-stochastic matrix.
std::vector<double> classwise_errors(const Matrix& probs, std::span<const int> labels, int m);
/// Mean NLL of softmax(logits / t) for each temperature t.
std::vector<double> temperature_nll(const Matrix& logits, std::span<const int> labels,
                                    std::span<const double> temperatures);

}  // namespace serial

namespace omp {

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix softmax_rows(const Matrix& logits);
std::vector<double> classwise_errors(const Matrix& probs, std::span<const int> labels, int m);
std::vector<double> temperature_nll(const Matrix& logits, std::span<const int> labels,
                                    std::span<const double> temperatures);

}  // namespace omp

// Shared per-item bodies used by both the serial and OpenMP loops.
namespace detail {

void matmul_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t r);
void softmax_row(std::span<const double> in, std::span<double> out);
double class_error(const Matrix& probs, std::span<const int> labels, std::size_t j, int m);
double temperature_nll_at(const Matrix& logits, std::span<const int> labels, double t);
void check_matmul_shapes(const Matrix& a, const Matrix& b);
void check_finite(const Matrix& m, const char* what);

}  // namespace detail

}  // namespace calibkit::kernels
