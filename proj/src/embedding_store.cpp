#include "turtle/embedding_store.hpp"

#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "turtle/errors.hpp"
#include "turtle/kernels.hpp"
#include "turtle/rng.hpp"

namespace turtle {

void MultiViewDataset::validate() const {
  if (views.empty()) throw ViewCountMismatch("dataset has no views");
  const std::size_t n = views[0].n_samples();
  for (const auto& v : views) {
    if (v.n_samples() != n)
      throw DimensionMismatch("view '" + v.name + "' has " + std::to_string(v.n_samples()) +
                              " samples, expected " + std::to_string(n));
    if (!v.data.all_finite()) throw NonFiniteValue("view '" + v.name + "' contains non-finite values");
  }
  if (!labels.empty()) {
    if (labels.size() != n)
      throw LengthMismatch("label count " + std::to_string(labels.size()) +
                           " != sample count " + std::to_string(n));
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] < 0 || labels[i] >= n_classes)
        throw LengthMismatch("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                             " outside [0, " + std::to_string(n_classes) + ")");
  }
  if (!split.empty() && split.size() != n)
    throw LengthMismatch("split mask length != sample count");
}

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};

std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_u32_le(std::ostream& os, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v & 0xFF),
                          static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
  os.write(reinterpret_cast<const char*>(buf), 4);
}

float f32_from_le(const unsigned char* p) {
  std::uint32_t bits = read_u32_le(p);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

void write_f32_le(std::ostream& os, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  write_u32_le(os, bits);
}

Matrix load_emb1(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MalformedHeader(path + ": cannot open file");
  unsigned char header[12];
  is.read(reinterpret_cast<char*>(header), 12);
  if (is.gcount() != 12)
    throw MalformedHeader(path + ": truncated header at byte offset " + std::to_string(is.gcount()));
  if (std::memcmp(header, kMagic, 4) != 0)
    throw MalformedHeader(path + ": bad magic at byte offset 0");
  const std::uint32_t n = read_u32_le(header + 4);
  const std::uint32_t q = read_u32_le(header + 8);
  if (n == 0 || q == 0)
    throw MalformedHeader(path + ": zero dimension in header (N=" + std::to_string(n) +
                          ", q=" + std::to_string(q) + ")");

  Matrix m(n, q);
  std::vector<unsigned char> rowbuf(static_cast<std::size_t>(q) * 4);
  for (std::uint32_t r = 0; r < n; ++r) {
    is.read(reinterpret_cast<char*>(rowbuf.data()), static_cast<std::streamsize>(rowbuf.size()));
    if (static_cast<std::size_t>(is.gcount()) != rowbuf.size())
      throw DimensionMismatch(path + ": payload ends at byte offset " +
                              std::to_string(12 + static_cast<std::size_t>(r) * q * 4 +
                                             static_cast<std::size_t>(is.gcount())) +
                              ", header promised " + std::to_string(n) + "x" + std::to_string(q));
    for (std::uint32_t c = 0; c < q; ++c) {
      const float f = f32_from_le(rowbuf.data() + static_cast<std::size_t>(c) * 4);
      if (!std::isfinite(f))
        throw NonFiniteValue(path + ": non-finite value at row " + std::to_string(r) + ", col " +
                             std::to_string(c));
      m(r, c) = static_cast<double>(f);
    }
  }
  // Trailing bytes mean the header undercounts.
  is.peek();
  if (!is.eof())
    throw DimensionMismatch(path + ": trailing data after byte offset " +
                            std::to_string(12 + static_cast<std::size_t>(n) * q * 4));
  return m;
}

Matrix load_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MalformedHeader(path + ": cannot open file");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      const std::string tok = line.substr(pos, comma - pos);
      std::size_t consumed = 0;
      double v;
      try {
        v = std::stod(tok, &consumed);
      } catch (const std::exception&) {
        throw MalformedHeader(path + ": unparseable value '" + tok + "' at row " +
                              std::to_string(lineno));
      }
      while (consumed < tok.size() && std::isspace(static_cast<unsigned char>(tok[consumed])))
        ++consumed;
      if (consumed != tok.size())
        throw MalformedHeader(path + ": unparseable value '" + tok + "' at row " +
                              std::to_string(lineno));
      if (!std::isfinite(v))
        throw NonFiniteValue(path + ": non-finite value at row " + std::to_string(lineno));
      row.push_back(v);
      pos = comma + 1;
      if (comma == line.size()) break;
    }
    if (!rows.empty() && row.size() != rows[0].size())
      throw DimensionMismatch(path + ": row " + std::to_string(lineno) + " has " +
                              std::to_string(row.size()) + " columns, expected " +
                              std::to_string(rows[0].size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw MalformedHeader(path + ": empty file");
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  return m;
}

std::string stem_of(const std::string& path) {
  const std::size_t slash = path.find_last_of("/\\");
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  const std::size_t dot = base.find_last_of('.');
  return dot == std::string::npos ? base : base.substr(0, dot);
}

}  // namespace

EmbeddingMatrix load_embeddings(const std::string& path, EmbeddingFormat format) {
  Matrix m = format == EmbeddingFormat::Emb1 ? load_emb1(path) : load_csv(path);
  return EmbeddingMatrix{stem_of(path), std::move(m)};
}

void save_emb1(const std::string& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MalformedHeader(path + ": cannot open file for writing");
  os.write(kMagic, 4);
  write_u32_le(os, static_cast<std::uint32_t>(m.rows()));
  write_u32_le(os, static_cast<std::uint32_t>(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) write_f32_le(os, static_cast<float>(m(r, c)));
  if (!os) throw MalformedHeader(path + ": write failed");
}

std::vector<int> load_labels(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MalformedHeader(path + ": cannot open file");
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      std::size_t consumed = 0;
      const int v = std::stoi(line, &consumed);
      while (consumed < line.size() && std::isspace(static_cast<unsigned char>(line[consumed])))
        ++consumed;
      if (consumed != line.size()) throw std::invalid_argument(line);
      labels.push_back(v);
    } catch (const std::exception&) {
      throw MalformedHeader(path + ": unparseable label at row " + std::to_string(lineno));
    }
  }
  return labels;
}

void save_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream os(path);
  if (!os) throw MalformedHeader(path + ": cannot open file for writing");
  for (int v : labels) os << v << '\n';
}

EmbeddingMatrix l2_normalize(const EmbeddingMatrix& m) {
  EmbeddingMatrix out = m;
  kernels::l2_normalize_rows_inplace(out.data);
  return out;
}

EmbeddingMatrix concatenate_views(const MultiViewDataset& d) {
  if (d.views.empty()) throw ViewCountMismatch("concatenate_views: no views");
  const std::size_t n = d.n_samples();
  std::size_t total_dim = 0;
  for (const auto& v : d.views) total_dim += v.dim();
  EmbeddingMatrix out{"concat", Matrix(n, total_dim)};
  std::size_t col = 0;
  for (const auto& v : d.views) {
    Matrix normed = v.data;
    kernels::l2_normalize_rows_inplace(normed);
    for (std::size_t r = 0; r < n; ++r)
      std::copy(normed.row(r).begin(), normed.row(r).end(), out.data.row(r).begin() + col);
    col += v.dim();
  }
  return out;
}

SplitSpec make_folds(std::size_t n_samples, int fold_count, std::uint64_t seed) {
  if (fold_count < 2) throw TooFewSamples("make_folds: fold_count must be >= 2");
  if (n_samples < static_cast<std::size_t>(fold_count))
    throw TooFewSamples("make_folds: " + std::to_string(n_samples) + " samples cannot fill " +
                        std::to_string(fold_count) + " folds");
  std::vector<int> order(n_samples);
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng(seed);
  rng.shuffle(order);
  SplitSpec spec{fold_count, seed, std::vector<int>(n_samples)};
  // Round-robin over the shuffled order gives sizes differing by at most 1.
  for (std::size_t i = 0; i < n_samples; ++i)
    spec.assignment[static_cast<std::size_t>(order[i])] = static_cast<int>(i % fold_count);
  return spec;
}

}  // namespace turtle
