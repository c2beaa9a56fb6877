#include "esc/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>

#include "esc/digest.hpp"
#include "esc/errors.hpp"
#include "esc/rng.hpp"

namespace esc {

namespace {

constexpr double kNormTol = 1e-12;
constexpr double kSignTol = 1e-12;

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off) {
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

void normalize_rows(Mat& X, bool normalize, double raw_scale) {
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (normalize) {
      const double nrm = X.row(i).norm();
      if (nrm == 0.0) throw DomainError("sample " + std::to_string(i) + " is the zero vector");
      X.row(i) /= nrm;
    } else {
      X.row(i) *= raw_scale;
    }
  }
}

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

bool is_binary(const LabeledDataset& ds) { return ds.kind == LabelKind::Binary; }

}  // namespace

LabeledDataset make_binary(Mat X, std::string source) {
  const int n = static_cast<int>(X.rows());
  if (n % 2 != 0) throw InvalidArgument("binary dataset needs an even sample count, got " + std::to_string(n));
  LabeledDataset ds;
  ds.X = std::move(X);
  ds.kind = LabelKind::Binary;
  ds.Y = Mat(n, 1);
  ds.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    const int y = i < n / 2 ? 1 : -1;
    ds.labels[i] = y;
    ds.Y(i, 0) = y;
  }
  ds.num_classes = 2;
  ds.source = std::move(source);
  return ds;
}

LabeledDataset make_onehot(Mat X, const std::vector<int>& labels, int num_classes, std::string source) {
  if (static_cast<Eigen::Index>(labels.size()) != X.rows())
    throw InvalidArgument("label count does not match sample count");
  if (num_classes < 1) throw InvalidArgument("num_classes must be positive");
  LabeledDataset ds;
  ds.X = std::move(X);
  ds.kind = LabelKind::OneHot;
  ds.Y = Mat::Zero(ds.X.rows(), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw InvalidArgument("label " + std::to_string(labels[i]) + " out of range");
    ds.Y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  ds.labels = labels;
  ds.num_classes = num_classes;
  ds.source = std::move(source);
  return ds;
}

void check_dataset(const LabeledDataset& ds) {
  const int n = ds.n();
  if (ds.Y.rows() != n) throw InvalidArgument("label matrix row count mismatch");
  for (int i = 0; i < n; ++i)
    if (ds.X.row(i).norm() > 1.0 + kNormTol)
      throw InvalidArgument("sample " + std::to_string(i) + " has norm > 1");
  if (is_binary(ds)) {
    if (n % 2 != 0) throw InvalidArgument("binary dataset with odd n");
    if (ds.Y.cols() != 1) throw InvalidArgument("binary dataset must have one label column");
    for (int i = 0; i < n; ++i) {
      const double want = i < n / 2 ? 1.0 : -1.0;
      if (ds.Y(i, 0) != want) throw InvalidArgument("binary labels are not in canonical order");
    }
  } else {
    for (int i = 0; i < n; ++i) {
      int ones = 0;
      for (Eigen::Index c = 0; c < ds.Y.cols(); ++c) {
        if (ds.Y(i, c) == 1.0) ++ones;
        else if (ds.Y(i, c) != 0.0) throw InvalidArgument("one-hot label with entry not in {0,1}");
      }
      if (ones != 1) throw InvalidArgument("one-hot label row " + std::to_string(i) + " is not a basis vector");
    }
  }
}

std::string dataset_digest(const LabeledDataset& ds) {
  std::string buf = "esc-dataset-v1";
  auto put = [&buf](const void* p, std::size_t n) { buf.append(static_cast<const char*>(p), n); };
  const std::int64_t shape[4] = {ds.n(), ds.d(), ds.outputs(), is_binary(ds) ? 0 : 1};
  put(shape, sizeof shape);
  for (int v : ds.labels) {
    const std::int32_t l = v;
    put(&l, sizeof l);
  }
  for (int i = 0; i < ds.n(); ++i)
    for (int j = 0; j < ds.d(); ++j) {
      const double x = ds.X(i, j);
      put(&x, sizeof x);
    }
  return sha256_hex(buf);
}

LabeledDataset gen_orthant_separable(int n, int d, std::uint64_t seed, bool include_antipodal,
                                     bool mirror_negatives) {
  if (n % 2 != 0 || n < 2) throw InvalidArgument("gen_orthant_separable: n must be even and >= 2");
  if (d < 2) throw InvalidArgument("gen_orthant_separable: d must be >= 2");
  CounterRng rng(seed, 0x0A7);
  Mat X(n, d);
  auto draw = [&](int row, double sign) {
    for (int j = 0; j < d; ++j) X(row, j) = std::abs(rng.normal());
    X.row(row) *= sign / X.row(row).norm();
  };
  const int h = n / 2;
  for (int i = 0; i < h; ++i) draw(i, 1.0);
  for (int i = h; i < n; ++i) {
    if (mirror_negatives) X.row(i) = -X.row(i - h);
    else draw(i, -1.0);
  }
  if (include_antipodal) X.row(h) = -X.row(0);
  char tag[96];
  std::snprintf(tag, sizeof tag, "synthetic:orthant n=%d d=%d seed=%llu antipodal=%d mirror=%d", n, d,
                static_cast<unsigned long long>(seed), include_antipodal ? 1 : 0, mirror_negatives ? 1 : 0);
  return make_binary(std::move(X), tag);
}

LabeledDataset gen_concentrated(int n, int d, int num_classes, std::uint64_t seed) {
  if (n < 1 || d < 1 || num_classes < 1) throw InvalidArgument("gen_concentrated: bad sizes");
  CounterRng rng(seed, 0xC0C);
  Mat X(n, d);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) X(i, j) = std::abs(rng.normal());
    X.row(i) /= X.row(i).norm();
    labels[i] = i % num_classes;
  }
  char tag[96];
  std::snprintf(tag, sizeof tag, "synthetic:concentrated n=%d d=%d C=%d seed=%llu", n, d, num_classes,
                static_cast<unsigned long long>(seed));
  return make_onehot(std::move(X), labels, num_classes, tag);
}

SeparabilityReport validate_separable(const LabeledDataset& ds) {
  if (!is_binary(ds)) throw WrongVariant("validate_separable requires binary labels");
  const int n = ds.n();
  const Mat G = ds.X * ds.X.transpose();
  SeparabilityReport r;
  r.binary = true;
  r.satisfies_4_1_i = (n % 2 == 0);
  double s = std::numeric_limits<double>::infinity();
  double gamma = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const bool same = ds.labels[i] == ds.labels[j];
      s = std::min(s, G(i, j));
      if (same) {
        gamma = std::min(gamma, G(i, j));
        if (G(i, j) < -kSignTol) r.satisfies_4_1_i = false;
      } else if (G(i, j) > kSignTol) {
        r.satisfies_4_1_i = false;
      }
    }
  r.s = s;
  r.gamma = gamma;
  r.satisfies_4_3 = s > -1.0 + 1e-9;

  for (int i = 0; i < n / 2 && !r.antipodal_pair; ++i)
    for (int j = n / 2; j < n; ++j)
      if ((ds.X.row(i) + ds.X.row(j)).norm() <= kNormTol && ds.X.row(i).norm() > 0.0) {
        r.antipodal_pair = true;
        r.antipodal_i = i;
        r.antipodal_j = j;
        break;
      }

  // Witness family for the inner minimisation over {v : v^T x_i <= 0}.
  // Projections v^T x_l are read off the Gram matrix.
  double witness = std::numeric_limits<double>::infinity();
  std::size_t count = 0;
  std::vector<double> proj(n);
  std::vector<int> active;
  auto evaluate = [&]() {
    active.clear();
    for (int l = 0; l < n; ++l)
      if (proj[l] > 0.0) active.push_back(l);
    if (active.empty()) return;
    ++count;
    for (int i = 0; i < n; ++i) {
      if (proj[i] > 0.0) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (int l : active) best = std::max(best, ds.labels[i] * ds.labels[l] * G(i, l));
      witness = std::min(witness, best);
    }
  };
  for (int j = 0; j < n; ++j)
    for (double sign : {1.0, -1.0}) {
      for (int l = 0; l < n; ++l) proj[l] = sign * G(j, l);
      evaluate();
    }
  r.pairwise_witnesses = n <= kPairwiseWitnessMaxN;
  if (r.pairwise_witnesses)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        if (j == k) continue;
        for (int l = 0; l < n; ++l) proj[l] = G(j, l) - G(k, l);
        evaluate();
      }
  r.witness_count = count;
  if (std::isfinite(witness)) r.mu0_witness = witness;
  if (r.antipodal_pair) r.mu0 = 1.0;
  else if (r.mu0_witness && *r.mu0_witness > 0.0) r.mu0 = std::min(1.0, *r.mu0_witness);
  return r;
}

SeparabilityReport validate_concentrated(const LabeledDataset& ds) {
  SeparabilityReport r;
  r.binary = is_binary(ds);
  const Mat G = ds.X * ds.X.transpose();
  r.s = G.minCoeff();
  r.satisfies_4_3 = r.s > -1.0 + 1e-9;
  if (r.binary) {
    double gamma = std::numeric_limits<double>::infinity();
    for (int i = 0; i < ds.n(); ++i)
      for (int j = 0; j < ds.n(); ++j)
        if (ds.labels[i] == ds.labels[j]) gamma = std::min(gamma, G(i, j));
    r.gamma = gamma;
  }
  return r;
}

GammaConstants compute_gamma_constants(const LabeledDataset& ds) {
  if (!is_binary(ds)) throw WrongVariant("compute_gamma_constants requires binary labels");
  const int n = ds.n();
  const int h = n / 2;
  KahanSum g1, g2;
  for (int block = 0; block < 2; ++block) {
    const int lo = block * h;
    for (int i = lo; i < lo + h; ++i)
      for (int j = lo; j < lo + h; ++j) {
        const double ip = ds.X.row(i).dot(ds.X.row(j));
        g2.add(ip);
        g1.add(ip * (1.0 - std::acos(clamp_unit(ip)) / std::numbers::pi));
      }
  }
  const double nn = static_cast<double>(n) * n;
  return {g1.value() / nn, g2.value() / nn};
}

VReport compute_V(const LabeledDataset& ds, int m, double delta) {
  if (!is_binary(ds)) throw WrongVariant("compute_V requires binary labels");
  if (m <= 0) throw InvalidArgument("compute_V: m must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("compute_V: delta must lie in (0,1)");
  const int n = ds.n();
  const int h = n / 2;
  VReport r;
  const Mat Xp = ds.X.topRows(h);
  const Mat Xm = ds.X.bottomRows(h);
  r.lambda_min_plus = lambda_min_symmetric(Xp * Xp.transpose());
  r.lambda_min_minus = lambda_min_symmetric(Xm * Xm.transpose());
  double gamma = std::numeric_limits<double>::infinity();
  const Mat G = ds.X * ds.X.transpose();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (ds.labels[i] == ds.labels[j]) gamma = std::min(gamma, G(i, j));
  r.gamma = gamma;
  const double nd = n;
  r.max_term = std::max(2.0 / nd + (nd - 2.0) * gamma / nd, std::min(r.lambda_min_plus, r.lambda_min_minus));
  r.bracket = 0.5 - std::sqrt(8.0 * std::log(nd * nd / delta) / m);
  r.V = r.bracket * r.max_term / 16.0;
  r.vacuous = r.V < 0.0;
  return r;
}

LabeledDataset load_mnist(const std::string& images_path, const std::string& labels_path, int count,
                          bool normalize) {
  if (count <= 0) throw InvalidArgument("load_mnist: count must be positive");
  const auto img = read_file(images_path);
  if (img.size() < 16) throw FormatError("IDX image file truncated: " + images_path);
  if (read_be32(img, 0) != 0x00000803u) throw FormatError("IDX image magic mismatch in " + images_path);
  const std::uint32_t n = read_be32(img, 4), rows = read_be32(img, 8), cols = read_be32(img, 12);
  if (static_cast<std::uint64_t>(count) > n)
    throw FormatError("requested " + std::to_string(count) + " images but file holds " + std::to_string(n));
  const std::size_t d = std::size_t(rows) * cols;
  if (img.size() < 16 + std::size_t(count) * d) throw FormatError("IDX image payload truncated");

  const auto lab = read_file(labels_path);
  if (lab.size() < 8) throw FormatError("IDX label file truncated: " + labels_path);
  if (read_be32(lab, 0) != 0x00000801u) throw FormatError("IDX label magic mismatch in " + labels_path);
  if (static_cast<std::uint64_t>(count) > read_be32(lab, 4))
    throw FormatError("requested more labels than the file holds");
  if (lab.size() < 8 + std::size_t(count)) throw FormatError("IDX label payload truncated");

  Mat X(count, static_cast<Eigen::Index>(d));
  std::vector<int> labels(count);
  for (int i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < d; ++j) X(i, static_cast<Eigen::Index>(j)) = img[16 + std::size_t(i) * d + j];
    labels[i] = lab[8 + i];
    if (labels[i] > 9) throw FormatError("MNIST label out of range");
  }
  normalize_rows(X, normalize, 1.0 / (255.0 * std::sqrt(static_cast<double>(d))));
  std::string src = "mnist:images=" + sha256_hex(img.data(), img.size()).substr(0, 16) +
                    ",labels=" + sha256_hex(lab.data(), lab.size()).substr(0, 16) +
                    ",count=" + std::to_string(count) + (normalize ? ",l2" : ",raw");
  return make_onehot(std::move(X), labels, 10, src);
}

LabeledDataset load_cifar10(const std::string& bin_path, int count, bool normalize) {
  constexpr std::size_t kRecord = 3073;
  if (count <= 0) throw InvalidArgument("load_cifar10: count must be positive");
  const auto buf = read_file(bin_path);
  if (buf.size() % kRecord != 0)
    throw FormatError("CIFAR-10 file length " + std::to_string(buf.size()) + " is not a multiple of 3073");
  const std::size_t records = buf.size() / kRecord;
  if (std::size_t(count) > records)
    throw FormatError("requested " + std::to_string(count) + " records but file holds " + std::to_string(records));
  Mat X(count, 3072);
  std::vector<int> labels(count);
  for (int i = 0; i < count; ++i) {
    const std::size_t off = std::size_t(i) * kRecord;
    labels[i] = buf[off];
    if (labels[i] > 9) throw FormatError("CIFAR-10 label out of range");
    for (int j = 0; j < 3072; ++j) X(i, j) = buf[off + 1 + j];
  }
  normalize_rows(X, normalize, 1.0 / (255.0 * std::sqrt(3072.0)));
  std::string src = "cifar10:" + sha256_hex(buf.data(), buf.size()).substr(0, 16) +
                    ",count=" + std::to_string(count) + (normalize ? ",l2" : ",raw");
  return make_onehot(std::move(X), labels, 10, src);
}

nlohmann::json to_json(const SeparabilityReport& r) {
  nlohmann::json j;
  j["binary"] = r.binary;
  j["satisfies_4_1_i"] = r.satisfies_4_1_i;
  j["mu0"] = r.mu0 ? nlohmann::json(*r.mu0) : nlohmann::json(nullptr);
  j["mu0_witness"] = r.mu0_witness ? nlohmann::json(*r.mu0_witness) : nlohmann::json(nullptr);
  j["antipodal_pair"] = r.antipodal_pair;
  if (r.antipodal_pair) j["antipodal_indices"] = {r.antipodal_i, r.antipodal_j};
  j["pairwise_witnesses"] = r.pairwise_witnesses;
  j["witness_count"] = r.witness_count;
  j["satisfies_4_3"] = r.satisfies_4_3;
  j["s"] = r.s;
  j["gamma"] = r.gamma;
  return j;
}

nlohmann::json to_json(const VReport& r) {
  return {{"V", r.V},
          {"bracket", r.bracket},
          {"max_term", r.max_term},
          {"lambda_min_plus", r.lambda_min_plus},
          {"lambda_min_minus", r.lambda_min_minus},
          {"gamma", r.gamma},
          {"vacuous", r.vacuous}};
}

void export_dataset_csv(const LabeledDataset& ds, const std::string& csv_path, const nlohmann::json& sidecar) {
  std::ofstream out(csv_path);
  if (!out) throw FormatError("cannot write " + csv_path);
  out << "index,label";
  for (int j = 0; j < ds.d(); ++j) out << ",x_" << j;
  out << '\n';
  char num[32];
  for (int i = 0; i < ds.n(); ++i) {
    out << i << ',' << ds.labels[i];
    for (int j = 0; j < ds.d(); ++j) {
      std::snprintf(num, sizeof num, "%.17g", ds.X(i, j));
      out << ',' << num;
    }
    out << '\n';
  }
  nlohmann::json side = sidecar;
  side["digest"] = dataset_digest(ds);
  side["source"] = ds.source;
  side["n"] = ds.n();
  side["d"] = ds.d();
  side["label_kind"] = is_binary(ds) ? "binary" : "onehot";
  std::ofstream js(csv_path + ".json");
  if (!js) throw FormatError("cannot write sidecar for " + csv_path);
  js << side.dump(2) << '\n';
}

}  // namespace esc
