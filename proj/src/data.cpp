#include "calibkit/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "calibkit/error.hpp"
#include "json.hpp"

namespace calibkit {

using nlohmann::json;

void LabeledDataset::validate() const {
  require(features.rows() >= 1, "dataset is empty");
  require(labels.size() == features.rows(), "dataset label count does not match feature rows");
  require(k >= 1, "dataset needs at least one class");
  for (int y : labels)
    require(y >= 0 && static_cast<std::size_t>(y) < k,
            "dataset label " + std::to_string(y) + " out of range");
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out{features.gather_rows(indices), {}, k};
  out.labels.reserve(indices.size());
  for (auto i : indices) out.labels.push_back(labels[i]);
  return out;
}

namespace {

LabeledDataset blobs_with_counts(const std::vector<std::size_t>& counts, std::size_t d,
                                 double separation, std::uint64_t seed) {
  const std::size_t k = counts.size();
  require(k >= 2, "blobs need at least two classes");
  require(d >= 2, "blobs need at least two feature dimensions");
  require(separation > 0.0 && std::isfinite(separation), "separation must be positive");

  // Orthonormal pair spanning a random plane.
  Rng plane_rng(derive_seed(seed, "blob-plane"));
  std::vector<double> u(d), v(d);
  for (auto& x : u) x = plane_rng.next_normal();
  for (auto& x : v) x = plane_rng.next_normal();
  auto dot = [d](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += a[i] * b[i];
    return s;
  };
  const double un = std::sqrt(dot(u, u));
  for (auto& x : u) x /= un;
  const double proj = dot(u, v);
  for (std::size_t i = 0; i < d; ++i) v[i] -= proj * u[i];
  const double vn = std::sqrt(dot(v, v));
  for (auto& x : v) x /= vn;

  const double phase = 2.0 * std::numbers::pi * plane_rng.next_uniform();
  const double radius = separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(k)));
  Matrix means(k, d);
  for (std::size_t j = 0; j < k; ++j) {
    const double angle = phase + 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(k);
    for (std::size_t i = 0; i < d; ++i)
      means(j, i) = radius * (std::cos(angle) * u[i] + std::sin(angle) * v[i]);
  }

  std::size_t n = 0;
  for (auto c : counts) n += c;
  LabeledDataset grouped{Matrix(n, d), std::vector<int>(n), k};
  Rng sample_rng(derive_seed(seed, "blob-samples"));
  std::size_t row = 0;
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t s = 0; s < counts[j]; ++s, ++row) {
      for (std::size_t i = 0; i < d; ++i) grouped.features(row, i) = means(j, i) + sample_rng.next_normal();
      grouped.labels[row] = static_cast<int>(j);
    }
  }
  Rng order_rng(derive_seed(seed, "blob-order"));
  const auto order = rng_shuffle(order_rng, n);
  return grouped.subset(order);
}

}  // namespace

LabeledDataset gen_blobs(const BlobParams& params, std::uint64_t seed) {
  require(params.k >= 2, "blobs need k >= 2");
  require(params.n >= params.k, "blobs need n >= k");
  require(params.d >= 2, "blobs need d >= 2");
  std::vector<std::size_t> counts(params.k, params.n / params.k);
  for (std::size_t j = 0; j < params.n % params.k; ++j) counts[j] += 1;
  return blobs_with_counts(counts, params.d, params.separation, seed);
}

std::vector<std::size_t> longtail_counts(std::size_t k, std::size_t n_max, double imbalance_factor) {
  require(k >= 2, "long-tail profile needs k >= 2");
  require(imbalance_factor >= 1.0 && std::isfinite(imbalance_factor),
          "imbalance factor must be >= 1");
  std::vector<std::size_t> counts(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double exponent = -static_cast<double>(j) / static_cast<double>(k - 1);
    const double exact = static_cast<double>(n_max) * std::pow(imbalance_factor, exponent);
    counts[j] = static_cast<std::size_t>(std::floor(exact + 0.5));
    require(counts[j] >= 1, "class " + std::to_string(j) + " count rounds to 0");
  }
  return counts;
}

LabeledDataset gen_longtail(const BlobParams& params, double imbalance_factor, std::uint64_t seed) {
  return blobs_with_counts(longtail_counts(params.k, params.n, imbalance_factor), params.d,
                           params.separation, seed);
}

LabeledDataset rotate_features(const LabeledDataset& ds, double theta_degrees) {
  require(ds.dims() >= 2, "rotation needs at least two feature dimensions");
  double c = 0.0;
  double s = 0.0;
  if (std::fmod(theta_degrees, 90.0) == 0.0) {
    const auto quarter = ((static_cast<long long>(theta_degrees / 90.0) % 4) + 4) % 4;
    constexpr double kCos[4] = {1.0, 0.0, -1.0, 0.0};
    constexpr double kSin[4] = {0.0, 1.0, 0.0, -1.0};
    c = kCos[quarter];
    s = kSin[quarter];
  } else {
    const double rad = theta_degrees * std::numbers::pi / 180.0;
    c = std::cos(rad);
    s = std::sin(rad);
  }
  LabeledDataset out = ds;
  for (std::size_t r = 0; r < out.size(); ++r) {
    const double x = ds.features(r, 0);
    const double y = ds.features(r, 1);
    out.features(r, 0) = c * x - s * y;
    out.features(r, 1) = s * x + c * y;
  }
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds,
                                                        double second_fraction,
                                                        std::uint64_t seed) {
  require(second_fraction > 0.0 && second_fraction < 1.0, "split fraction must lie in (0, 1)");
  Rng rng(seed);
  const auto perm = rng_shuffle(rng, ds.size());
  const auto n_second = static_cast<std::size_t>(
      std::floor(static_cast<double>(ds.size()) * second_fraction + 0.5));
  require(n_second >= 1 && n_second < ds.size(), "split leaves an empty part");
  std::span<const std::size_t> all(perm);
  const std::size_t n_first = ds.size() - n_second;
  return {ds.subset(all.subspan(0, n_first)), ds.subset(all.subspan(n_first))};
}

// ---------------------------------------------------------------- CSV

void save_dataset_csv(const LabeledDataset& ds, const std::filesystem::path& path) {
  ds.validate();
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < ds.dims(); ++i) out << 'f' << i << ',';
  out << "label\n";
  char buf[40];
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (double v : ds.features.row(r)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf << ',';
    }
    out << ds.labels[r] << '\n';
  }
  require(static_cast<bool>(out), "write to " + path.string() + " failed");
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? comma : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_exact(std::string_view text, T& value) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && text.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  return ec == std::errc() && ptr == last && first != last;
}

[[noreturn]] void fail_at(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

LabeledDataset load_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) fail_at(path, 1, "empty file");
  const auto first = split_commas(trim(line));
  double probe = 0.0;
  // The header is optional; a first line that starts with a number is data.
  const bool has_header = !parse_exact(trim(first.front()), probe);
  if (first.size() < 2) fail_at(path, 1, "need at least one feature column and a label");
  const std::size_t d = first.size() - 1;
  if (has_header) {
    if (trim(first.back()) != "label") fail_at(path, 1, "header must be f0,...,f{D-1},label");
    for (std::size_t i = 0; i < d; ++i)
      if (trim(first[i]) != "f" + std::to_string(i))
        fail_at(path, 1, "header column " + std::to_string(i) + " must be f" + std::to_string(i));
  }

  std::vector<double> values;
  std::vector<int> labels;
  auto parse_row = [&](std::string_view text, std::size_t line_no) {
    const auto fields = split_commas(text);
    if (fields.size() != d + 1)
      fail_at(path, line_no, "expected " + std::to_string(d + 1) + " fields, got " +
                                 std::to_string(fields.size()));
    for (std::size_t i = 0; i < d; ++i) {
      double v = 0.0;
      if (!parse_exact(trim(fields[i]), v) || !std::isfinite(v))
        fail_at(path, line_no, "bad feature value '" + std::string(fields[i]) + "'");
      values.push_back(v);
    }
    int y = 0;
    if (!parse_exact(trim(fields[d]), y)) fail_at(path, line_no, "label is not an integer");
    if (y < 0) fail_at(path, line_no, "negative label");
    labels.push_back(y);
  };
  std::size_t line_no = 1;
  if (!has_header) parse_row(trim(line), 1);
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (!text.empty()) parse_row(text, line_no);
  }
  if (labels.empty()) fail_at(path, line_no, "no data rows");
  const auto k = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
  const std::size_t n = labels.size();
  return LabeledDataset{Matrix(n, d, std::move(values)), std::move(labels), k};
}

// -------------------------------------------------------------- JSONL

void save_prediction_log_jsonl(const PredictionLog& log, const std::filesystem::path& path,
                               const Matrix* logits) {
  require(logits == nullptr || (logits->rows() == log.size() && logits->cols() == log.num_classes()),
          "logit matrix shape does not match the prediction log");
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot open " + path.string() + " for writing");
  for (std::size_t r = 0; r < log.size(); ++r) {
    json line;
    const auto row = log.probs().row(r);
    line["probs"] = std::vector<double>(row.begin(), row.end());
    line["label"] = log.labels()[r];
    if (logits != nullptr) {
      const auto z = logits->row(r);
      line["logits"] = std::vector<double>(z.begin(), z.end());
    }
    out << line.dump() << '\n';
  }
  require(static_cast<bool>(out), "write to " + path.string() + " failed");
}

namespace {

std::vector<double> number_array(const json& node, const std::filesystem::path& path,
                                 std::size_t line_no, const char* key) {
  if (!node.is_array()) fail_at(path, line_no, std::string(key) + " must be an array");
  std::vector<double> out;
  out.reserve(node.size());
  for (const auto& v : node) {
    if (!v.is_number()) fail_at(path, line_no, std::string(key) + " must hold numbers");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail_at(path, line_no, std::string(key) + " must be finite");
    out.push_back(x);
  }
  return out;
}

}  // namespace

LoadedLog load_prediction_log_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open prediction log " + path.string());
  std::vector<double> probs;
  std::vector<double> logits;
  std::vector<int> labels;
  std::size_t k = 0;
  bool every_line_has_logits = true;
  std::size_t line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::exception&) {
      fail_at(path, line_no, "not valid JSON");
    }
    if (!doc.is_object()) fail_at(path, line_no, "expected a JSON object");
    if (!doc.contains("label") || !doc["label"].is_number_integer())
      fail_at(path, line_no, "missing integer label");
    const auto label = doc["label"].get<long long>();

    std::vector<double> row;
    std::vector<double> z;
    if (doc.contains("logits")) z = number_array(doc["logits"], path, line_no, "logits");
    if (doc.contains("probs")) {
      row = number_array(doc["probs"], path, line_no, "probs");
    } else if (!z.empty()) {
      if (z.size() < 2) fail_at(path, line_no, "need at least two classes");
      Matrix single(1, z.size(), z);
      const Matrix p = softmax_rows(single);
      row.assign(p.data().begin(), p.data().end());
    } else {
      fail_at(path, line_no, "line needs probs or logits");
    }
    if (!z.empty() && z.size() != row.size())
      fail_at(path, line_no, "logits and probs lengths differ");
    every_line_has_logits = every_line_has_logits && !z.empty();

    if (k == 0) k = row.size();
    if (row.size() != k)
      fail_at(path, line_no, "expected " + std::to_string(k) + " classes, got " +
                                 std::to_string(row.size()));
    if (k < 2) fail_at(path, line_no, "need at least two classes");
    if (label < 0 || static_cast<std::size_t>(label) >= k)
      fail_at(path, line_no, "label " + std::to_string(label) + " out of range");
    double total = 0.0;
    for (double p : row) {
      if (p < 0.0 || p > 1.0) fail_at(path, line_no, "probability outside [0, 1]");
      total += p;
    }
    const double off = std::abs(total - 1.0);
    if (off > kRenormalizeTolerance)
      fail_at(path, line_no, "probabilities sum to " + std::to_string(total));
    if (off > kRowSumTolerance)
      for (double& p : row) p /= total;

    probs.insert(probs.end(), row.begin(), row.end());
    if (!z.empty()) logits.insert(logits.end(), z.begin(), z.end());
    labels.push_back(static_cast<int>(label));
  }
  if (labels.empty()) fail_at(path, line_no == 0 ? 1 : line_no, "prediction log is empty");
  const std::size_t n = labels.size();
  LoadedLog out{PredictionLog(Matrix(n, k, std::move(probs)), std::move(labels)), std::nullopt};
  if (every_line_has_logits) out.logits = Matrix(n, k, std::move(logits));
  return out;
}

}  // namespace calibkit
