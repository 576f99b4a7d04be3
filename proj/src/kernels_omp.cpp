#include <omp.h>

#include <cstdint>

#include "calibkit/kernels.hpp"

namespace calibkit::kernels::omp {

namespace {
// Below this many multiply-adds the fork/join costs more than it saves.
constexpr std::size_t kMinParallelWork = 1 << 15;
}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  detail::check_matmul_shapes(a, b);
  Matrix out(a.rows(), b.cols());
  const auto rows = static_cast<std::int64_t>(a.rows());
  const bool big = a.rows() * a.cols() * b.cols() >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::int64_t r = 0; r < rows; ++r)
    detail::matmul_row(a, b, out, static_cast<std::size_t>(r));
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  detail::check_finite(logits, "softmax input");
  Matrix out(logits.rows(), logits.cols());
  const auto rows = static_cast<std::int64_t>(logits.rows());
  const bool big = logits.size() >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::int64_t r = 0; r < rows; ++r)
    detail::softmax_row(logits.row(static_cast<std::size_t>(r)),
                        out.row(static_cast<std::size_t>(r)));
  return out;
}

std::vector<double> classwise_errors(const Matrix& probs, std::span<const int> labels, int m) {
  std::vector<double> out(probs.cols());
  const auto k = static_cast<std::int64_t>(probs.cols());
  const bool big = probs.size() >= kMinParallelWork / 8;
#pragma omp parallel for schedule(dynamic) if (big)
  for (std::int64_t j = 0; j < k; ++j)
    out[static_cast<std::size_t>(j)] =
        detail::class_error(probs, labels, static_cast<std::size_t>(j), m);
  return out;
}

std::vector<double> temperature_nll(const Matrix& logits, std::span<const int> labels,
                                    std::span<const double> temperatures) {
  std::vector<double> out(temperatures.size());
  const auto grid = static_cast<std::int64_t>(temperatures.size());
  const bool big = logits.size() * temperatures.size() >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::int64_t g = 0; g < grid; ++g)
    out[static_cast<std::size_t>(g)] =
        detail::temperature_nll_at(logits, labels, temperatures[static_cast<std::size_t>(g)]);
  return out;
}

}  // namespace calibkit::kernels::omp
