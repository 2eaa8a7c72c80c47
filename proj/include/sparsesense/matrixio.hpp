#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sparsesense {

/// Column-per-sample observation matrix (n measurement dimensions x m samples).
struct DataMatrix {
  Eigen::MatrixXd values;
  std::vector<int> labels;          // class id per column, in [0, num_classes)
  Eigen::VectorXd row_means;        // training means; zero until centered
  bool centered = false;
  int num_classes = 0;
  std::vector<std::string> class_names;

  int dims() const { return static_cast<int>(values.rows()); }
  int samples() const { return static_cast<int>(values.cols()); }
};

/// Throws if labels, class coverage, or the centering flag disagree with the values.
void check_data_matrix(const DataMatrix& X);

struct PgmImage {
  Eigen::VectorXd pixels;  // row-major, scaled into [0, 1]
  int height = 0;
  int width = 0;
};

// Binary P5 only. Throws PgmFormatError (magic/maxval), PgmHeaderError, or
// PgmTruncatedError.
PgmImage load_pgm(const std::filesystem::path& path);
PgmImage parse_pgm(std::string_view bytes, const std::string& source = "<memory>");

/// Writes values (clamped to [0,1]) as binary P5 with the given maxval.
void save_pgm(const std::filesystem::path& path, const Eigen::VectorXd& pixels, int height,
              int width, int maxval = 255);

Eigen::MatrixXd load_matrix_csv(const std::filesystem::path& path);
Eigen::MatrixXd parse_matrix_csv(std::string_view text, const std::string& source = "<memory>");
/// Shortest round-trip decimal representation, ',' separated, '\n' terminated.
std::string format_matrix_csv(const Eigen::MatrixXd& M);
void save_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& M);

struct ClassEntry {
  std::string name;
  std::vector<std::filesystem::path> files;
};

struct DatasetManifest {
  std::vector<ClassEntry> classes;
  int height = 0;
  int width = 0;
};

/// Parses {"classes":[{"name":..,"files":[..]}],"height":H,"width":W}.
/// Relative file paths resolve against the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(std::string_view json_text,
                               const std::filesystem::path& base_dir = {});
void check_manifest(const DatasetManifest& manifest);

/// Class-major, manifest-ordered columns; labels follow manifest class order.
DataMatrix assemble_dataset(const DatasetManifest& manifest);

DataMatrix center_rows(const DataMatrix& X);
DataMatrix uncenter_rows(const DataMatrix& X);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace sparsesense
