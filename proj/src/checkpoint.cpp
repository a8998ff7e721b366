#include "erw/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace erw {

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is, const char* what) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw std::runtime_error(std::string("checkpoint: truncated file reading ") + what);
  }
  return v;
}
std::uint64_t read_u64(std::istream& is, const char* what) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw std::runtime_error(std::string("checkpoint: truncated file reading ") + what);
  }
  return v;
}

void write_array(std::ostream& os, const Matrix& m) {
  write_u32(os, 2);
  write_u64(os, static_cast<std::uint64_t>(m.rows()));
  write_u64(os, static_cast<std::uint64_t>(m.cols()));
  os.write(reinterpret_cast<const char*>(m.data()), sizeof(double) * m.size());
}

void write_array(std::ostream& os, const Vector& v) {
  write_u32(os, 1);
  write_u64(os, static_cast<std::uint64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()), sizeof(double) * v.size());
}

Matrix read_matrix(std::istream& is, const char* what) {
  const std::uint32_t rank = read_u32(is, what);
  if (rank != 2) {
    throw std::runtime_error(std::string("checkpoint: expected rank-2 array for ") + what);
  }
  const auto rows = static_cast<Index>(read_u64(is, what));
  const auto cols = static_cast<Index>(read_u64(is, what));
  if (rows <= 0 || cols <= 0 || rows * cols > (Index(1) << 30)) {
    throw std::runtime_error(std::string("checkpoint: implausible array shape for ") + what);
  }
  Matrix m(rows, cols);
  if (!is.read(reinterpret_cast<char*>(m.data()), sizeof(double) * m.size())) {
    throw std::runtime_error(std::string("checkpoint: truncated array data for ") + what);
  }
  return m;
}

Vector read_vector(std::istream& is, const char* what) {
  const std::uint32_t rank = read_u32(is, what);
  if (rank != 1) {
    throw std::runtime_error(std::string("checkpoint: expected rank-1 array for ") + what);
  }
  const auto n = static_cast<Index>(read_u64(is, what));
  if (n <= 0 || n > (Index(1) << 30)) {
    throw std::runtime_error(std::string("checkpoint: implausible array length for ") + what);
  }
  Vector v(n);
  if (!is.read(reinterpret_cast<char*>(v.data()), sizeof(double) * v.size())) {
    throw std::runtime_error(std::string("checkpoint: truncated array data for ") + what);
  }
  return v;
}

void check_magic(std::istream& is, const char* magic, const std::string& path) {
  char buf[4];
  if (!is.read(buf, 4) || std::string(buf, 4) != magic) {
    throw std::runtime_error("checkpoint: " + path + " is not a " + magic + " file");
  }
  const std::uint32_t version = read_u32(is, "version");
  if (version != 1) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  return is;
}

}  // namespace

void save_teacher_codec(const std::string& path, const LatentCodec& codec,
                        const TeacherEncoder& teacher) {
  std::ofstream os = open_out(path);
  os.write("ERWT", 4);
  write_u32(os, 1);
  write_array(os, codec.encode_map);
  write_array(os, codec.decode_map);
  write_array(os, codec.mean);
  for (const Matrix& p : teacher.params()) write_array(os, p);
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::pair<LatentCodec, TeacherEncoder> load_teacher_codec(const std::string& path) {
  std::ifstream is = open_in(path);
  check_magic(is, "ERWT", path);
  LatentCodec codec;
  codec.encode_map = read_matrix(is, "codec.encode_map");
  codec.decode_map = read_matrix(is, "codec.decode_map");
  codec.mean = read_vector(is, "codec.mean");
  std::vector<Matrix> params;
  params.reserve(6);
  for (int i = 0; i < 6; ++i) params.push_back(read_matrix(is, "teacher.param"));
  return {std::move(codec), TeacherEncoder(std::move(params))};
}

void save_backbone(const std::string& path, const Backbone& model) {
  std::ofstream os = open_out(path);
  os.write("ERWM", 4);
  write_u32(os, 1);
  const BackboneConfig& c = model.config();
  for (Index field : {c.depth, c.width, c.erw_depth, c.erw_start, c.proj_tap, c.d_lat, c.d_rep,
                      c.time_dim, c.head_width}) {
    write_u64(os, static_cast<std::uint64_t>(field));
  }
  write_u32(os, static_cast<std::uint32_t>(model.num_params()));
  for (Index i = 0; i < model.num_params(); ++i) write_array(os, model.param(i));
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Backbone load_backbone(const std::string& path) {
  std::ifstream is = open_in(path);
  check_magic(is, "ERWM", path);
  BackboneConfig cfg;
  cfg.depth = static_cast<Index>(read_u64(is, "depth"));
  cfg.width = static_cast<Index>(read_u64(is, "width"));
  cfg.erw_depth = static_cast<Index>(read_u64(is, "erw_depth"));
  cfg.erw_start = static_cast<Index>(read_u64(is, "erw_start"));
  cfg.proj_tap = static_cast<Index>(read_u64(is, "proj_tap"));
  cfg.d_lat = static_cast<Index>(read_u64(is, "d_lat"));
  cfg.d_rep = static_cast<Index>(read_u64(is, "d_rep"));
  cfg.time_dim = static_cast<Index>(read_u64(is, "time_dim"));
  cfg.head_width = static_cast<Index>(read_u64(is, "head_width"));
  Backbone model(cfg, 0);
  const std::uint32_t count = read_u32(is, "param count");
  if (count != static_cast<std::uint32_t>(model.num_params())) {
    throw std::runtime_error("checkpoint: parameter count " + std::to_string(count) +
                             " does not match config (" + std::to_string(model.num_params()) + ")");
  }
  for (Index i = 0; i < model.num_params(); ++i) {
    Matrix p = read_matrix(is, "backbone.param");
    if (p.rows() != model.param(i).rows() || p.cols() != model.param(i).cols()) {
      throw std::runtime_error("checkpoint: parameter shape mismatch at index " + std::to_string(i));
    }
    model.param(i) = std::move(p);
  }
  return model;
}

std::uint64_t file_hash(const std::string& path) {
  std::ifstream is = open_in(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    h = fnv1a64(buf, static_cast<size_t>(is.gcount()), h);
    if (!is) break;
  }
  return h;
}

}  // namespace erw
