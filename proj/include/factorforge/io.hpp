// SPDX-License-Identifier: Apache-2.0
// Tensor, factor and trace files.
//
// COO text: a header line `N n_1 ... n_N`, then `i_1 ... i_N value` per
// entry with 1-based indices. Lines that are blank or start with '#' or '%'
// are skipped. Dense binary: "FFDT", u32 version, u32 N, u64 dims[N], then
// the values as little-endian doubles in first-index-fastest order.
#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "factorforge/admm.hpp"
#include "factorforge/driver.hpp"
#include "factorforge/tensor.hpp"

namespace factorforge {

namespace fs = std::filesystem;

struct ParseError : std::runtime_error {
  ParseError(const std::string& what, std::size_t line_, std::size_t column_)
      : std::runtime_error(what + " (line " + std::to_string(line_) + ", column " + std::to_string(column_) + ")"),
        line(line_),
        column(column_) {}
  std::size_t line, column;
};

enum class TensorFormat { coo, matrix_market, dense_binary };

inline std::string_view to_string(TensorFormat f) {
  switch (f) {
    case TensorFormat::coo: return "coo";
    case TensorFormat::matrix_market: return "matrix-market";
    case TensorFormat::dense_binary: return "dense-binary";
  }
  return "?";
}

inline TensorFormat tensor_format_from_string(std::string_view s) {
  if (s == "coo") return TensorFormat::coo;
  if (s == "matrix-market") return TensorFormat::matrix_market;
  if (s == "dense-binary") return TensorFormat::dense_binary;
  throw std::invalid_argument("unknown tensor format '" + std::string(s) + "'");
}

/// .mtx -> matrix-market, .bin -> dense-binary, anything else -> coo.
inline TensorFormat infer_format(const fs::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".mtx") return TensorFormat::matrix_market;
  if (ext == ".bin") return TensorFormat::dense_binary;
  return TensorFormat::coo;
}

namespace detail {

struct Token {
  std::string_view text;
  std::size_t column;  // 1-based
};

inline std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i == line.size()) break;
    const std::size_t b = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    out.push_back({line.substr(b, i - b), b + 1});
  }
  return out;
}

inline bool skippable(std::string_view line) {
  for (char c : line) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    return c == '#' || c == '%';
  }
  return true;
}

inline std::size_t parse_size(const Token& t, std::size_t line, const char* what) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
  if (ec != std::errc() || p != t.text.data() + t.text.size())
    throw ParseError(std::string("expected ") + what + ", got '" + std::string(t.text) + "'", line, t.column);
  return v;
}

inline double parse_double(const Token& t, std::size_t line) {
  double v = 0;
  auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
  if (ec != std::errc() || p != t.text.data() + t.text.size() || !std::isfinite(v))
    throw ParseError("expected a finite value, got '" + std::string(t.text) + "'", line, t.column);
  return v;
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ifstream open_in(const fs::path& p, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(p, mode);
  if (!in) throw std::runtime_error("cannot open '" + p.string() + "' for reading");
  return in;
}

inline std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::out) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, mode | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + p.string() + "' for writing");
  return out;
}

inline void check_written(std::ostream& out, const fs::path& p) {
  out.flush();
  if (!out) throw std::runtime_error("write to '" + p.string() + "' failed");
}

}  // namespace detail

// ---------------------------------------------------------------- COO

inline SparseTensor read_coo(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::size_t> dims;
  std::vector<std::size_t> idx, lines;
  std::vector<double> vals;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skippable(line)) continue;
    const auto tok = detail::tokenize(line);
    if (dims.empty()) {
      const std::size_t n = detail::parse_size(tok[0], lineno, "tensor order");
      if (n < 2) throw ParseError("tensor order must be >= 2", lineno, tok[0].column);
      if (tok.size() != n + 1)
        throw ParseError("header needs " + std::to_string(n) + " dimensions", lineno,
                         tok.size() > n + 1 ? tok[n + 1].column : line.size() + 1);
      for (std::size_t m = 0; m < n; ++m) {
        dims.push_back(detail::parse_size(tok[m + 1], lineno, "dimension"));
        if (dims.back() == 0) throw ParseError("dimension must be positive", lineno, tok[m + 1].column);
      }
      continue;
    }
    const std::size_t n = dims.size();
    if (tok.size() != n + 1)
      throw ParseError("entry needs " + std::to_string(n) + " indices and a value", lineno,
                       tok.size() > n + 1 ? tok[n + 1].column : line.size() + 1);
    for (std::size_t m = 0; m < n; ++m) {
      const std::size_t i = detail::parse_size(tok[m], lineno, "index");
      if (i < 1 || i > dims[m])
        throw ParseError("index " + std::to_string(i) + " outside 1.." + std::to_string(dims[m]) + " in mode " +
                             std::to_string(m + 1),
                         lineno, tok[m].column);
      idx.push_back(i - 1);
    }
    vals.push_back(detail::parse_double(tok[n], lineno));
    lines.push_back(lineno);
  }
  if (dims.empty()) throw ParseError("missing header line", lineno + 1, 1);
  try {
    return SparseTensor(dims, std::move(idx), std::move(vals));
  } catch (const SparseTensor::DuplicateEntry& e) {
    throw ParseError("duplicate entry, first given on line " + std::to_string(lines[e.first]), lines[e.second], 1);
  }
}

inline void write_coo(std::ostream& out, const SparseTensor& t) {
  out << t.order();
  for (std::size_t d : t.dims()) out << ' ' << d;
  out << '\n';
  for (std::size_t e = 0; e < t.nnz(); ++e) {
    for (std::size_t i : t.index(e)) out << i + 1 << ' ';
    out << detail::fmt_double(t.values()[e]) << '\n';
  }
}

// ---------------------------------------------------------------- Matrix Market

namespace detail {

struct MmHeader {
  bool coordinate = false;
  std::size_t rows = 0, cols = 0, nnz = 0;
};

inline MmHeader read_mm_header(std::istream& in, std::size_t& lineno) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty Matrix Market file", 1, 1);
  lineno = 1;
  const auto tok = tokenize(line);
  if (tok.size() != 5 || tok[0].text != "%%MatrixMarket" || tok[1].text != "matrix")
    throw ParseError("expected '%%MatrixMarket matrix <format> real general'", 1, 1);
  MmHeader h;
  if (tok[2].text == "coordinate")
    h.coordinate = true;
  else if (tok[2].text != "array")
    throw ParseError("unsupported format '" + std::string(tok[2].text) + "'", 1, tok[2].column);
  if (tok[3].text != "real" && tok[3].text != "integer" && tok[3].text != "double")
    throw ParseError("unsupported field '" + std::string(tok[3].text) + "'", 1, tok[3].column);
  if (tok[4].text != "general") throw ParseError("only general symmetry is supported", 1, tok[4].column);
  while (std::getline(in, line)) {
    ++lineno;
    if (skippable(line)) continue;
    const auto sz = tokenize(line);
    if (sz.size() != (h.coordinate ? 3u : 2u)) throw ParseError("malformed size line", lineno, 1);
    h.rows = parse_size(sz[0], lineno, "row count");
    h.cols = parse_size(sz[1], lineno, "column count");
    if (h.coordinate) h.nnz = parse_size(sz[2], lineno, "entry count");
    if (h.rows == 0 || h.cols == 0) throw ParseError("matrix dimensions must be positive", lineno, 1);
    return h;
  }
  throw ParseError("missing size line", lineno + 1, 1);
}

}  // namespace detail

/// Reads either Matrix Market layout as a dense matrix.
inline Matrix read_matrix_market(std::istream& in) {
  std::size_t lineno = 0;
  const auto h = detail::read_mm_header(in, lineno);
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(h.rows), static_cast<Eigen::Index>(h.cols));
  std::vector<std::uint8_t> seen(h.coordinate ? h.rows * h.cols : 0, 0);
  std::size_t count = 0;
  const std::size_t expect = h.coordinate ? h.nnz : h.rows * h.cols;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skippable(line)) continue;
    const auto tok = detail::tokenize(line);
    if (count == expect) throw ParseError("more entries than declared", lineno, 1);
    if (h.coordinate) {
      if (tok.size() != 3) throw ParseError("coordinate entry needs row, column and value", lineno, 1);
      const std::size_t i = detail::parse_size(tok[0], lineno, "row index");
      const std::size_t j = detail::parse_size(tok[1], lineno, "column index");
      if (i < 1 || i > h.rows) throw ParseError("row index out of range", lineno, tok[0].column);
      if (j < 1 || j > h.cols) throw ParseError("column index out of range", lineno, tok[1].column);
      auto& s = seen[(i - 1) + h.rows * (j - 1)];
      if (s) throw ParseError("duplicate entry", lineno, 1);
      s = 1;
      m(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j - 1)) = detail::parse_double(tok[2], lineno);
    } else {
      if (tok.size() != 1) throw ParseError("array entry needs exactly one value", lineno, 1);
      m.data()[count] = detail::parse_double(tok[0], lineno);
    }
    ++count;
  }
  if (count != expect)
    throw ParseError("expected " + std::to_string(expect) + " entries, found " + std::to_string(count), lineno + 1, 1);
  return m;
}

inline SparseTensor read_matrix_market_sparse(std::istream& in) {
  std::size_t lineno = 0;
  const auto h = detail::read_mm_header(in, lineno);
  if (!h.coordinate) throw ParseError("expected coordinate layout", 1, 1);
  std::vector<std::size_t> idx, lines;
  std::vector<double> vals;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skippable(line)) continue;
    const auto tok = detail::tokenize(line);
    if (tok.size() != 3) throw ParseError("coordinate entry needs row, column and value", lineno, 1);
    const std::size_t i = detail::parse_size(tok[0], lineno, "row index");
    const std::size_t j = detail::parse_size(tok[1], lineno, "column index");
    if (i < 1 || i > h.rows) throw ParseError("row index out of range", lineno, tok[0].column);
    if (j < 1 || j > h.cols) throw ParseError("column index out of range", lineno, tok[1].column);
    idx.insert(idx.end(), {i - 1, j - 1});
    vals.push_back(detail::parse_double(tok[2], lineno));
    lines.push_back(lineno);
  }
  if (vals.size() != h.nnz)
    throw ParseError("expected " + std::to_string(h.nnz) + " entries, found " + std::to_string(vals.size()),
                     lineno + 1, 1);
  try {
    return SparseTensor({h.rows, h.cols}, std::move(idx), std::move(vals));
  } catch (const SparseTensor::DuplicateEntry& e) {
    throw ParseError("duplicate entry, first given on line " + std::to_string(lines[e.first]), lines[e.second], 1);
  }
}

inline void write_matrix_market(std::ostream& out, const Matrix& m) {
  out << "%%MatrixMarket matrix array real general\n" << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.size(); ++i) out << detail::fmt_double(m.data()[i]) << '\n';
}

inline void write_matrix_market(std::ostream& out, const SparseTensor& t) {
  if (t.order() != 2) throw std::invalid_argument("Matrix Market holds matrices only");
  out << "%%MatrixMarket matrix coordinate real general\n"
      << t.dims()[0] << ' ' << t.dims()[1] << ' ' << t.nnz() << '\n';
  for (std::size_t e = 0; e < t.nnz(); ++e)
    out << t.index(e, 0) + 1 << ' ' << t.index(e, 1) + 1 << ' ' << detail::fmt_double(t.values()[e]) << '\n';
}

// ---------------------------------------------------------------- dense binary

inline DenseTensor read_dense_binary(std::istream& in) {
  static_assert(std::endian::native == std::endian::little, "dense-binary I/O assumes a little-endian host");
  char magic[4];
  std::uint32_t version = 0, order = 0;
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "FFDT") throw std::runtime_error("not a dense-binary file");
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&order), 4);
  if (!in || version != 1) throw std::runtime_error("unsupported dense-binary version");
  if (order < 2 || order > 64) throw std::runtime_error("dense-binary order out of range");
  std::vector<std::uint64_t> d(order);
  in.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(8 * order));
  if (!in) throw std::runtime_error("truncated dense-binary header");
  std::vector<std::size_t> dims(d.begin(), d.end());
  const std::size_t total = detail::checked_product(dims);
  if (total > kDefaultElementBudget) throw std::length_error("dense-binary tensor exceeds the element budget");
  std::vector<double> vals(total);
  in.read(reinterpret_cast<char*>(vals.data()), static_cast<std::streamsize>(8 * total));
  if (!in) throw std::runtime_error("truncated dense-binary payload");
  return DenseTensor(std::move(dims), std::move(vals));
}

inline void write_dense_binary(std::ostream& out, const DenseTensor& t) {
  const std::uint32_t version = 1, order = static_cast<std::uint32_t>(t.order());
  out.write("FFDT", 4);
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&order), 4);
  for (std::size_t d : t.dims()) {
    const std::uint64_t v = d;
    out.write(reinterpret_cast<const char*>(&v), 8);
  }
  out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(8 * t.size()));
}

// ---------------------------------------------------------------- path-level API

inline TensorData load_tensor(const fs::path& path, TensorFormat format) {
  switch (format) {
    case TensorFormat::coo: {
      auto in = detail::open_in(path);
      return read_coo(in);
    }
    case TensorFormat::matrix_market: {
      auto in = detail::open_in(path);
      std::string first;
      std::getline(in, first);
      in.seekg(0);
      if (first.find("coordinate") != std::string::npos) return read_matrix_market_sparse(in);
      const Matrix m = read_matrix_market(in);
      return DenseTensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                         std::vector<double>(m.data(), m.data() + m.size()));
    }
    case TensorFormat::dense_binary: {
      auto in = detail::open_in(path, std::ios::binary);
      return read_dense_binary(in);
    }
  }
  throw std::invalid_argument("unknown tensor format");
}

inline TensorData load_tensor(const fs::path& path) { return load_tensor(path, infer_format(path)); }

inline void save_tensor(const fs::path& path, const TensorData& t, TensorFormat format) {
  auto out = detail::open_out(path, format == TensorFormat::dense_binary ? std::ios::binary : std::ios::out);
  switch (format) {
    case TensorFormat::coo:
      if (const auto* s = std::get_if<SparseTensor>(&t))
        write_coo(out, *s);
      else
        write_coo(out, SparseTensor::from_dense(std::get<DenseTensor>(t)));
      break;
    case TensorFormat::matrix_market:
      if (dims_of(t).size() != 2) throw std::invalid_argument("Matrix Market holds matrices only");
      if (const auto* s = std::get_if<SparseTensor>(&t)) {
        write_matrix_market(out, *s);
      } else {
        const auto& d = std::get<DenseTensor>(t);
        write_matrix_market(out, Matrix(Eigen::Map<const Matrix>(d.data(), static_cast<Eigen::Index>(d.dims()[0]),
                                                                 static_cast<Eigen::Index>(d.dims()[1]))));
      }
      break;
    case TensorFormat::dense_binary:
      if (const auto* s = std::get_if<SparseTensor>(&t))
        write_dense_binary(out, s->to_dense());
      else
        write_dense_binary(out, std::get<DenseTensor>(t));
      break;
  }
  detail::check_written(out, path);
}

inline Matrix load_matrix(const fs::path& path) {
  auto in = detail::open_in(path);
  return read_matrix_market(in);
}

inline void save_matrix(const fs::path& path, const Matrix& m) {
  auto out = detail::open_out(path);
  write_matrix_market(out, m);
  detail::check_written(out, path);
}

// ---------------------------------------------------------------- factor sets

/// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

struct FactorManifest {
  std::vector<std::size_t> dims;
  std::size_t rank = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::size_t iteration = 0;
  bool has_duals = false;
  TensorFormat format = TensorFormat::matrix_market;
};

struct FactorSet {
  std::vector<Matrix> factors;
  std::vector<Matrix> duals;  // empty unless saved
  FactorManifest manifest;
};

namespace detail {

inline fs::path factor_file(const fs::path& dir, const char* stem, std::size_t d, TensorFormat f) {
  return dir / (stem + std::to_string(d) + (f == TensorFormat::dense_binary ? ".bin" : ".mtx"));
}

inline void save_factor_matrix(const fs::path& p, const Matrix& m, TensorFormat f) {
  if (f == TensorFormat::matrix_market) return save_matrix(p, m);
  save_tensor(p,
              DenseTensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                          std::vector<double>(m.data(), m.data() + m.size())),
              TensorFormat::dense_binary);
}

inline Matrix load_factor_matrix(const fs::path& p, TensorFormat f) {
  if (f == TensorFormat::matrix_market) return load_matrix(p);
  auto in = open_in(p, std::ios::binary);
  const DenseTensor t = read_dense_binary(in);
  if (t.order() != 2) throw std::runtime_error("'" + p.string() + "' is not a matrix");
  return Eigen::Map<const Matrix>(t.data(), static_cast<Eigen::Index>(t.dims()[0]),
                                  static_cast<Eigen::Index>(t.dims()[1]));
}

}  // namespace detail

/// Writes factor_<d> per mode (plus dual_<d> when duals are given) and
/// manifest.json into `dir`. Files end in .mtx or .bin per `manifest.format`.
inline void save_factors(const fs::path& dir, std::span<const Matrix> factors, std::span<const Matrix> duals,
                         FactorManifest manifest) {
  if (factors.empty()) throw std::invalid_argument("no factors to save");
  if (!duals.empty() && duals.size() != factors.size()) throw std::invalid_argument("need one dual per factor");
  if (manifest.format == TensorFormat::coo) throw std::invalid_argument("factors are saved as matrix-market or dense-binary");
  fs::create_directories(dir);
  manifest.dims.clear();
  for (const auto& f : factors) manifest.dims.push_back(static_cast<std::size_t>(f.rows()));
  manifest.rank = static_cast<std::size_t>(factors.front().cols());
  manifest.has_duals = !duals.empty();
  for (std::size_t d = 0; d < factors.size(); ++d) {
    detail::save_factor_matrix(detail::factor_file(dir, "factor_", d, manifest.format), factors[d], manifest.format);
    if (!duals.empty())
      detail::save_factor_matrix(detail::factor_file(dir, "dual_", d, manifest.format), duals[d], manifest.format);
  }
  nlohmann::ordered_json j;
  j["dims"] = manifest.dims;
  j["rank"] = manifest.rank;
  j["seed"] = manifest.seed;
  j["config_hash"] = manifest.config_hash;
  j["iteration"] = manifest.iteration;
  j["has_duals"] = manifest.has_duals;
  j["format"] = to_string(manifest.format);
  auto out = detail::open_out(dir / "manifest.json");
  out << j.dump(2) << '\n';
  detail::check_written(out, dir / "manifest.json");
}

inline FactorSet load_factors(const fs::path& dir) {
  FactorSet fsout;
  auto in = detail::open_in(dir / "manifest.json");
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    fsout.manifest.dims = j.at("dims").get<std::vector<std::size_t>>();
    fsout.manifest.rank = j.at("rank").get<std::size_t>();
    fsout.manifest.seed = j.value("seed", std::uint64_t{0});
    fsout.manifest.config_hash = j.value("config_hash", std::string());
    fsout.manifest.iteration = j.value("iteration", std::size_t{0});
    fsout.manifest.has_duals = j.value("has_duals", false);
    fsout.manifest.format = tensor_format_from_string(j.value("format", std::string("matrix-market")));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("bad manifest in '" + dir.string() + "': " + e.what());
  }
  const TensorFormat f = fsout.manifest.format;
  for (std::size_t d = 0; d < fsout.manifest.dims.size(); ++d) {
    fsout.factors.push_back(detail::load_factor_matrix(detail::factor_file(dir, "factor_", d, f), f));
    const auto& m = fsout.factors.back();
    if (static_cast<std::size_t>(m.rows()) != fsout.manifest.dims[d] ||
        static_cast<std::size_t>(m.cols()) != fsout.manifest.rank)
      throw std::runtime_error("factor " + std::to_string(d) + " does not match the manifest");
    if (fsout.manifest.has_duals) {
      fsout.duals.push_back(detail::load_factor_matrix(detail::factor_file(dir, "dual_", d, f), f));
      if (fsout.duals.back().rows() != m.rows() || fsout.duals.back().cols() != m.cols())
        throw std::runtime_error("dual " + std::to_string(d) + " does not match its factor");
    }
  }
  return fsout;
}

// ---------------------------------------------------------------- trace.csv

inline constexpr std::string_view kTraceHeader = "iter,objective,rel_error,inner_iters_per_mode,elapsed_s";

/// One row; inner iteration counts are joined with ';'.
inline std::string trace_row(const TraceRecord& r) {
  std::string s = std::to_string(r.iter) + ',' + detail::fmt_double(r.objective) + ',' + detail::fmt_double(r.rel_error) + ',';
  for (std::size_t d = 0; d < r.inner_iters.size(); ++d) s += (d ? ";" : "") + std::to_string(r.inner_iters[d]);
  return s + ',' + detail::fmt_double(r.elapsed_s);
}

inline void write_trace_csv(std::ostream& out, std::span<const TraceRecord> trace) {
  out << kTraceHeader << '\n';
  for (const auto& r : trace) out << trace_row(r) << '\n';
}

inline std::vector<TraceRecord> read_trace_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || line != kTraceHeader) throw ParseError("unexpected trace header", 1, 1);
  std::vector<TraceRecord> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 5) throw ParseError("trace row needs 5 fields", lineno, 1);
    TraceRecord r;
    try {
      r.iter = std::stoull(f[0]);
      r.objective = std::stod(f[1]);
      r.rel_error = std::stod(f[2]);
      std::stringstream it(f[3]);
      for (std::string c; std::getline(it, c, ';');) r.inner_iters.push_back(std::stoull(c));
      r.elapsed_s = std::stod(f[4]);
    } catch (const std::exception&) {
      throw ParseError("malformed trace row", lineno, 1);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace factorforge
