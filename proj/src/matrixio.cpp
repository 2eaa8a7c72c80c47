#include "sparsesense/matrixio.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <sstream>

#include "sparsesense/errors.hpp"

namespace sparsesense {

namespace fs = std::filesystem;
using json = nlohmann::json;

void check_data_matrix(const DataMatrix& X) {
  if (static_cast<Eigen::Index>(X.labels.size()) != X.values.cols())
    throw DimensionError("labels length " + std::to_string(X.labels.size()) +
                         " does not match column count " + std::to_string(X.values.cols()));
  if (X.num_classes < 1) throw PreconditionError("data matrix needs at least one class");
  std::vector<int> counts(static_cast<std::size_t>(X.num_classes), 0);
  for (int label : X.labels) {
    if (label < 0 || label >= X.num_classes)
      throw PreconditionError("class id " + std::to_string(label) + " outside [0, " +
                              std::to_string(X.num_classes) + ")");
    ++counts[static_cast<std::size_t>(label)];
  }
  for (int j = 0; j < X.num_classes; ++j)
    if (counts[static_cast<std::size_t>(j)] == 0)
      throw PreconditionError("class " + std::to_string(j) + " has no samples");
  if (X.row_means.size() != X.values.rows())
    throw DimensionError("row_means length does not match row count");
  if (X.centered && X.values.size() > 0) {
    const double bound = 1e-8 * static_cast<double>(X.values.cols()) *
                         std::max(X.values.cwiseAbs().maxCoeff(), 1e-300);
    if ((X.values.rowwise().sum().cwiseAbs().array() > bound).any())
      throw PreconditionError("data matrix flagged centered but rows are not mean-zero");
  }
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

// ---- PGM ----

namespace {

class HeaderReader {
 public:
  HeaderReader(std::string_view bytes, const std::string& source)
      : bytes_(bytes), source_(source) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char ch = bytes_[pos_];
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long read_int(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    if (start == pos_)
      throw PgmHeaderError(source_ + ": malformed PGM header, missing " + field);
    long value = 0;
    auto [ptr, ec] = std::from_chars(bytes_.data() + start, bytes_.data() + pos_, value);
    if (ec != std::errc{} || ptr != bytes_.data() + pos_)
      throw PgmHeaderError(source_ + ": malformed PGM header, bad " + field);
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void consume_single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_])))
      throw PgmHeaderError(source_ + ": malformed PGM header, no whitespace after maxval");
    ++pos_;
  }

  std::size_t position() const { return pos_; }

 private:
  std::string_view bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

PgmImage parse_pgm(std::string_view bytes, const std::string& source) {
  if (bytes.size() < 2) throw PgmHeaderError(source + ": file too short for a PGM header");
  if (bytes[0] != 'P' || bytes[1] != '5')
    throw PgmFormatError(source + ": unsupported magic number '" +
                         std::string(bytes.substr(0, 2)) + "' (only binary P5 is supported)");
  HeaderReader header(bytes.substr(2), source);
  const long width = header.read_int("width");
  const long height = header.read_int("height");
  const long maxval = header.read_int("maxval");
  if (width <= 0 || height <= 0) throw PgmHeaderError(source + ": non-positive image size");
  if (maxval <= 0 || maxval > 65535)
    throw PgmFormatError(source + ": unsupported maxval " + std::to_string(maxval));
  header.consume_single_whitespace();

  const std::size_t offset = 2 + header.position();
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  const std::size_t bytes_per_sample = maxval < 256 ? 1 : 2;
  if (bytes.size() - offset < count * bytes_per_sample)
    throw PgmTruncatedError(source + ": truncated payload, expected " +
                            std::to_string(count * bytes_per_sample) + " bytes, found " +
                            std::to_string(bytes.size() - offset));

  PgmImage image;
  image.height = static_cast<int>(height);
  image.width = static_cast<int>(width);
  image.pixels.resize(static_cast<Eigen::Index>(count));
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
  const double scale = 1.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < count; ++i) {
    unsigned value = bytes_per_sample == 1
                         ? raw[i]
                         : (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1];  // big-endian
    image.pixels(static_cast<Eigen::Index>(i)) = static_cast<double>(value) * scale;
  }
  return image;
}

PgmImage load_pgm(const fs::path& path) {
  return parse_pgm(read_text_file(path), path.string());
}

void save_pgm(const fs::path& path, const Eigen::VectorXd& pixels, int height, int width,
              int maxval) {
  if (maxval <= 0 || maxval > 65535) throw PreconditionError("maxval must be in [1, 65535]");
  if (pixels.size() != static_cast<Eigen::Index>(height) * width)
    throw DimensionError("pixel count does not match " + std::to_string(height) + "x" +
                         std::to_string(width));
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n" +
                    std::to_string(maxval) + "\n";
  for (Eigen::Index i = 0; i < pixels.size(); ++i) {
    const double v = std::clamp(pixels(i), 0.0, 1.0);
    const auto q = static_cast<unsigned>(std::lround(v * maxval));
    if (maxval < 256) {
      out.push_back(static_cast<char>(q));
    } else {
      out.push_back(static_cast<char>(q >> 8));
      out.push_back(static_cast<char>(q & 0xFF));
    }
  }
  write_text_file(path, out);
}

// ---- CSV ----

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

}  // namespace

Eigen::MatrixXd parse_matrix_csv(std::string_view text, const std::string& source) {
  std::vector<double> cells;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;

    std::size_t count = 0;
    while (true) {
      const std::size_t comma = line.find(',');
      std::string_view cell = trim(line.substr(0, comma));
      if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size())
        throw IoError(source + ":" + std::to_string(line_no) + ": non-numeric cell '" +
                      std::string(cell) + "'");
      cells.push_back(value);
      ++count;
      if (comma == std::string_view::npos) break;
      line.remove_prefix(comma + 1);
    }
    if (rows == 0) {
      cols = count;
    } else if (count != cols) {
      throw IoError(source + ":" + std::to_string(line_no) + ": ragged row with " +
                    std::to_string(count) + " cells, expected " + std::to_string(cols));
    }
    ++rows;
  }
  Eigen::MatrixXd M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cells[i * cols + j];
  return M;
}

Eigen::MatrixXd load_matrix_csv(const fs::path& path) {
  return parse_matrix_csv(read_text_file(path), path.string());
}

std::string format_matrix_csv(const Eigen::MatrixXd& M) {
  std::string out;
  out.reserve(static_cast<std::size_t>(M.size()) * 12);
  char buf[64];
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (j > 0) out.push_back(',');
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), M(i, j));
      out.append(buf, ptr);
    }
    out.push_back('\n');
  }
  return out;
}

void save_matrix_csv(const fs::path& path, const Eigen::MatrixXd& M) {
  write_text_file(path, format_matrix_csv(M));
}

// ---- manifest ----

void check_manifest(const DatasetManifest& manifest) {
  if (manifest.classes.size() < 2) throw PreconditionError("manifest needs at least 2 classes");
  for (const auto& entry : manifest.classes)
    if (entry.files.empty()) throw PreconditionError("manifest class '" + entry.name + "' is empty");
  if (manifest.height <= 0 || manifest.width <= 0)
    throw PreconditionError("manifest height and width must be positive");
}

DatasetManifest parse_manifest(std::string_view json_text, const fs::path& base_dir) {
  DatasetManifest manifest;
  try {
    const json doc = json::parse(json_text);
    manifest.height = doc.at("height").get<int>();
    manifest.width = doc.at("width").get<int>();
    for (const auto& cls : doc.at("classes")) {
      ClassEntry entry;
      entry.name = cls.at("name").get<std::string>();
      for (const auto& f : cls.at("files")) {
        fs::path p = f.get<std::string>();
        entry.files.push_back(p.is_relative() && !base_dir.empty() ? base_dir / p : p);
      }
      manifest.classes.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed dataset manifest: ") + e.what());
  }
  check_manifest(manifest);
  return manifest;
}

DatasetManifest load_manifest(const fs::path& path) {
  return parse_manifest(read_text_file(path), path.parent_path());
}

DataMatrix assemble_dataset(const DatasetManifest& manifest) {
  check_manifest(manifest);
  std::size_t total = 0;
  for (const auto& entry : manifest.classes) total += entry.files.size();
  const Eigen::Index n = static_cast<Eigen::Index>(manifest.height) * manifest.width;

  DataMatrix X;
  X.values.resize(n, static_cast<Eigen::Index>(total));
  X.labels.reserve(total);
  X.num_classes = static_cast<int>(manifest.classes.size());
  Eigen::Index col = 0;
  for (std::size_t j = 0; j < manifest.classes.size(); ++j) {
    const auto& entry = manifest.classes[j];
    X.class_names.push_back(entry.name);
    for (const auto& file : entry.files) {
      PgmImage image = load_pgm(file);
      if (image.height != manifest.height || image.width != manifest.width)
        throw DimensionError(file.string() + ": image is " + std::to_string(image.height) + "x" +
                             std::to_string(image.width) + ", manifest declares " +
                             std::to_string(manifest.height) + "x" +
                             std::to_string(manifest.width));
      X.values.col(col++) = image.pixels;
      X.labels.push_back(static_cast<int>(j));
    }
  }
  X.row_means = Eigen::VectorXd::Zero(n);
  X.centered = false;
  return X;
}

DataMatrix center_rows(const DataMatrix& X) {
  if (X.centered) throw PreconditionError("data matrix is already centered");
  DataMatrix out = X;
  if (X.values.cols() == 0) {
    out.row_means = Eigen::VectorXd::Zero(X.values.rows());
  } else {
    out.row_means = X.values.rowwise().mean();
    out.values = X.values.colwise() - out.row_means;
  }
  out.centered = true;
  return out;
}

DataMatrix uncenter_rows(const DataMatrix& X) {
  if (!X.centered) throw PreconditionError("data matrix is not centered");
  DataMatrix out = X;
  out.values = X.values.colwise() + X.row_means;
  out.row_means = Eigen::VectorXd::Zero(X.values.rows());
  out.centered = false;
  return out;
}

}  // namespace sparsesense
