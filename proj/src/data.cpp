#include "fedtiny/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "fedtiny/error.hpp"
#include "fedtiny/rng.hpp"

namespace fedtiny {

void Dataset::validate() const {
  require(!labels.empty(), ErrorCode::kInvalidArgument, "dataset is empty");
  require(features.rank() == 2 && features.rows() == labels.size(), ErrorCode::kShapeMismatch,
          "feature rows do not match label count");
  for (int y : labels)
    require(y >= 0 && static_cast<std::size_t>(y) < classes, ErrorCode::kInvalidArgument,
            "label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  require(!indices.empty(), ErrorCode::kInvalidArgument, "subset must be non-empty");
  const auto d = dim();
  std::vector<double> values;
  values.reserve(indices.size() * d);
  std::vector<int> ys;
  ys.reserve(indices.size());
  for (auto i : indices) {
    require(i < size(), ErrorCode::kInvalidArgument, "subset index out of range");
    auto r = features.row(i);
    values.insert(values.end(), r.begin(), r.end());
    ys.push_back(labels[i]);
  }
  return {Tensor({indices.size(), d}, std::move(values)), std::move(ys), classes};
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return subset(idx);
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(classes, 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

Dataset make_blobs(std::size_t classes, std::size_t per_class, std::size_t dim, double spread,
                   std::uint64_t seed) {
  require(classes > 0 && per_class > 0 && dim > 0, ErrorCode::kInvalidArgument,
          "blob counts must be positive");
  require(spread >= 0.0, ErrorCode::kInvalidArgument, "blob spread must be non-negative");
  Rng rng(derive_seed(seed, {0xb10b}));
  std::uniform_real_distribution<double> center(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> means(classes * dim);
  for (auto& m : means) m = center(rng);

  Dataset ds{Tensor::matrix(classes * per_class, dim), {}, classes};
  ds.labels.reserve(classes * per_class);
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t s = 0; s < per_class; ++s) {
      auto row = ds.features.row(ds.labels.size());
      for (std::size_t j = 0; j < dim; ++j) row[j] = means[c * dim + j] + spread * noise(rng);
      ds.labels.push_back(static_cast<int>(c));
    }
  return ds;
}

std::vector<Dataset> dirichlet_partition(const Dataset& ds, const PartitionSpec& spec) {
  ds.validate();
  require(spec.clients >= 1, ErrorCode::kInvalidArgument, "client count must be at least 1");
  require(spec.alpha > 0.0 && std::isfinite(spec.alpha), ErrorCode::kInvalidArgument,
          "Dirichlet alpha must be positive");
  require(spec.clients <= ds.size(), ErrorCode::kInvalidArgument,
          "more clients than samples");
  const auto k = spec.clients;

  std::vector<std::vector<std::size_t>> by_class(ds.classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);

  Rng rng(derive_seed(spec.seed, {0xd112}));
  std::gamma_distribution<double> gamma(spec.alpha, 1.0);
  for (std::size_t attempt = 0; attempt < spec.max_attempts; ++attempt) {
    std::vector<std::vector<std::size_t>> assigned(k);
    for (auto members : by_class) {
      if (members.empty()) continue;
      std::shuffle(members.begin(), members.end(), rng);
      std::vector<double> p(k);
      double total = 0.0;
      for (auto& v : p) total += (v = gamma(rng));
      if (!(total > 0.0)) {
        // Every draw underflowed (tiny alpha); fall back to one random client.
        std::fill(p.begin(), p.end(), 0.0);
        p[std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)] = 1.0;
        total = 1.0;
      }
      const double nc = static_cast<double>(members.size());
      double cum = 0.0;
      std::size_t start = 0;
      for (std::size_t c = 0; c < k; ++c) {
        cum += p[c] / total;
        const std::size_t end =
            c + 1 == k ? members.size()
                       : std::min(members.size(), static_cast<std::size_t>(std::floor(cum * nc)));
        for (std::size_t i = start; i < std::max(start, end); ++i) assigned[c].push_back(members[i]);
        start = std::max(start, end);
      }
    }
    if (std::all_of(assigned.begin(), assigned.end(), [](const auto& a) { return !a.empty(); })) {
      std::vector<Dataset> out;
      out.reserve(k);
      for (auto& a : assigned) {
        std::sort(a.begin(), a.end());
        out.push_back(ds.subset(a));
      }
      return out;
    }
  }
  fail(ErrorCode::kExhausted, "Dirichlet partition left a client empty after " +
                                  std::to_string(spec.max_attempts) +
                                  " draws; too many clients for the dataset");
}

std::vector<std::size_t> dev_indices(std::size_t n, double ratio, std::uint64_t seed) {
  require(ratio > 0.0 && ratio <= 1.0, ErrorCode::kInvalidArgument,
          "development ratio must lie in (0, 1]");
  require(n >= 1, ErrorCode::kInvalidArgument, "dataset is empty");
  const auto m = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, {0xde5}));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(m, n));
  std::sort(idx.begin(), idx.end());
  return idx;
}

Dataset dev_split(const Dataset& ds, double ratio, std::uint64_t seed) {
  const auto idx = dev_indices(ds.size(), ratio, seed);
  return ds.subset(idx);
}

Dataset shuffled(const Dataset& ds, std::uint64_t seed) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, {0x5f1e}));
  std::shuffle(idx.begin(), idx.end(), rng);
  return ds.subset(idx);
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch,
                                                              std::size_t min_last) {
  require(batch >= 1, ErrorCode::kInvalidArgument, "batch size must be at least 1");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch) out.emplace_back(b, std::min(n, b + batch));
  if (out.size() >= 2 && out.back().second - out.back().first < min_last) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& opts) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIo, "cannot open " + path.string());
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t dim = 0;
  std::string line;
  std::size_t lineno = 0;
  const auto where = [&] { return path.string() + ":" + std::to_string(lineno) + ": "; };
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && opts.skip_header) continue;
    const auto body = trim(line);
    if (body.empty()) continue;

    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = body.find(',', start);
      cells.push_back(trim(body.substr(start, comma == std::string_view::npos ? body.npos : comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    require(cells.size() >= 2, ErrorCode::kParse, where() + "need at least one feature and a label");
    if (dim == 0) dim = cells.size() - 1;
    require(cells.size() - 1 == dim, ErrorCode::kParse,
            where() + "expected " + std::to_string(dim + 1) + " columns, found " +
                std::to_string(cells.size()));
    for (std::size_t j = 0; j < dim; ++j) {
      double v = 0.0;
      const auto cell = cells[j];
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      require(ec == std::errc{} && p == cell.data() + cell.size() && std::isfinite(v),
              ErrorCode::kParse, where() + "malformed number '" + std::string(cell) + "'");
      values.push_back(v);
    }
    const auto lab = cells.back();
    long long y = 0;
    auto [p, ec] = std::from_chars(lab.data(), lab.data() + lab.size(), y);
    require(ec == std::errc{} && p == lab.data() + lab.size(), ErrorCode::kParse,
            where() + "label '" + std::string(lab) + "' is not an integer");
    require(y >= 0 && y <= 1'000'000, ErrorCode::kParse,
            where() + "label " + std::to_string(y) + " must be a non-negative class index");
    labels.push_back(static_cast<int>(y));
  }
  require(!labels.empty(), ErrorCode::kParse, path.string() + ": no data rows");
  const int max_label = *std::max_element(labels.begin(), labels.end());
  Dataset ds{Tensor({labels.size(), dim}, std::move(values)), std::move(labels),
             static_cast<std::size_t>(max_label) + 1};
  ds.validate();
  return ds;
}

}  // namespace fedtiny
