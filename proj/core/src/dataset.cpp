#include "nemo/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <system_error>

#include "nemo/errors.hpp"

namespace nemo {

OfflineDataset::OfflineDataset(int dim, std::vector<double> X,
                               std::vector<double> y, std::string name)
    : dim(dim), X(std::move(X)), y(std::move(y)), name(std::move(name)) {
  if (dim < 0 || this->X.size() != this->y.size() * static_cast<std::size_t>(dim)) {
    throw ShapeError("dataset: X must hold N rows of width d");
  }
}

void OfflineDataset::push_back(std::span<const double> x, double value) {
  if (static_cast<int>(x.size()) != dim) {
    throw ShapeError("dataset: row width differs from d");
  }
  X.insert(X.end(), x.begin(), x.end());
  y.push_back(value);
}

void OfflineDataset::validate() const {
  if (y.empty()) throw DataError("dataset: no rows");
  if (X.size() != y.size() * static_cast<std::size_t>(dim)) {
    throw DataError("dataset: X row count differs from the length of y");
  }
  for (double v : X) {
    if (!std::isfinite(v)) throw DataError("dataset: non-finite design entry");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw DataError("dataset: non-finite output");
  }
}

std::vector<std::size_t> OfflineDataset::order_by_score_desc() const {
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
  return idx;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

double parse_number(const std::string& field, std::size_t line) {
  const std::string f = trim(field);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (f.empty() || ec != std::errc() || ptr != f.data() + f.size()) {
    throw ParseError("not a number: '" + f + "'", line);
  }
  return v;
}

}  // namespace

std::string dataset_to_csv(const OfflineDataset& data) {
  std::string out;
  for (int j = 0; j < data.dim; ++j) out += "x" + std::to_string(j) + ",";
  out += "y\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.row(i)) out += format_double(v) + ",";
    out += format_double(data.y[i]) + "\n";
  }
  return out;
}

OfflineDataset dataset_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) {
      header = split_fields(line);
      break;
    }
  }
  if (header.empty()) throw ParseError("missing header row", line_no ? line_no : 1);
  for (auto& h : header) h = trim(h);
  if (header.back() != "y") {
    throw ParseError("header must end with a 'y' column", line_no);
  }
  const int d = static_cast<int>(header.size()) - 1;
  for (int j = 0; j < d; ++j) {
    if (header[j] != "x" + std::to_string(j)) {
      throw ParseError("expected column 'x" + std::to_string(j) + "', got '" +
                           header[j] + "'",
                       line_no);
    }
  }
  OfflineDataset data;
  data.dim = d;
  std::vector<double> row(d);
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) +
                           " fields, got " + std::to_string(fields.size()),
                       line_no);
    }
    for (int j = 0; j < d; ++j) row[j] = parse_number(fields[j], line_no);
    const double y = parse_number(fields[d], line_no);
    for (double v : row) {
      if (!std::isfinite(v)) throw ParseError("non-finite value", line_no);
    }
    if (!std::isfinite(y)) throw ParseError("non-finite value", line_no);
    data.push_back(row, y);
  }
  if (data.empty()) throw DataError("dataset file has a header but no rows");
  return data;
}

void save_dataset(const OfflineDataset& data, const std::filesystem::path& path) {
  write_file_atomic(path, dataset_to_csv(data));
}

OfflineDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  OfflineDataset d = dataset_from_csv(ss.str());
  d.name = path.stem().string();
  return d;
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("cannot move " + tmp.string() + " to " + path.string() + ": " +
                ec.message());
  }
}

}  // namespace nemo
