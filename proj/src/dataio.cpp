#include "sbnn/dataio.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string_view>

#include "sbnn/errors.hpp"

namespace sbnn {

Bytes read_file(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) fail(ErrorCode::IoError, "cannot open " + path);
  Bytes out;
  std::uint8_t buf[1 << 16];
  for (;;) {
    const int n = gzread(f, buf, sizeof buf);
    if (n < 0) {
      int code = 0;
      const std::string msg = gzerror(f, &code);
      gzclose(f);
      fail(ErrorCode::TruncatedError, path + ": " + msg);
    }
    if (n == 0) break;
    out.insert(out.end(), buf, buf + n);
  }
  gzclose(f);
  return out;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoError, "write failed for " + path);
}

void write_gzip_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  gzFile f = gzopen(path.c_str(), "wb9");
  if (f == nullptr) fail(ErrorCode::IoError, "cannot write " + path);
  const bool ok = bytes.empty() ||
                  gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size())) ==
                      static_cast<int>(bytes.size());
  if (gzclose(f) != Z_OK || !ok) fail(ErrorCode::IoError, "write failed for " + path);
}

namespace {

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::string_view what) : bytes_(bytes), what_(what) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      fail(ErrorCode::TruncatedError, std::string(what_) + " ends early at byte " + std::to_string(pos_));
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t be32() {
    const auto s = take(4);
    return std::uint32_t{s[0]} << 24 | std::uint32_t{s[1]} << 16 | std::uint32_t{s[2]} << 8 | s[3];
  }
  std::uint64_t le(int bytes) {
    const auto s = take(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = bytes - 1; i >= 0; --i) v = v << 8 | s[static_cast<std::size_t>(i)];
    return v;
  }
  std::uint32_t le32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t le64() { return le(8); }
  double f64() { return std::bit_cast<double>(le64()); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string_view what_;
};

class Writer {
 public:
  void be32(std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void le(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void le32(std::uint32_t v) { le(v, 4); }
  void le64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::string_view s) { out.insert(out.end(), s.begin(), s.end()); }

  Bytes out;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1U << 30);
    crc = crc32(crc, bytes.data() + pos, static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

void append_crc(Writer& w) { w.le32(crc32_of(w.out)); }

// Verifies the trailing CRC and returns the payload before it.
std::span<const std::uint8_t> verified_payload(std::span<const std::uint8_t> bytes,
                                               std::string_view what) {
  if (bytes.size() < 4) fail(ErrorCode::TruncatedError, std::string(what) + " is too short");
  const auto payload = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4), what);
  if (tail.le32() != crc32_of(payload)) {
    fail(ErrorCode::ChecksumError, std::string(what) + " checksum does not match");
  }
  return payload;
}

}  // namespace

Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels) {
  Reader img(images, "IDX image file");
  Reader lab(labels, "IDX label file");
  const std::uint32_t img_magic = img.be32();
  if (img_magic != kIdxImageMagic) {
    fail(ErrorCode::FormatError, "image file magic is " + std::to_string(img_magic) + ", expected 2051");
  }
  const std::uint32_t lab_magic = lab.be32();
  if (lab_magic != kIdxLabelMagic) {
    fail(ErrorCode::FormatError, "label file magic is " + std::to_string(lab_magic) + ", expected 2049");
  }
  const std::size_t n = img.be32();
  Dataset d;
  d.rows = img.be32();
  d.cols = img.be32();
  const std::size_t n_labels = lab.be32();
  if (n != n_labels) {
    fail(ErrorCode::LabelMismatch, std::to_string(n) + " images but " + std::to_string(n_labels) + " labels");
  }
  const auto pix = img.take(n * d.dim());
  const auto lbl = lab.take(n);
  d.pixels.resize(pix.size());
  for (std::size_t i = 0; i < pix.size(); ++i) d.pixels[i] = pix[i] / 255.0;
  d.labels.assign(lbl.begin(), lbl.end());
  return d;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  return parse_idx(read_file(images_path), read_file(labels_path));
}

Bytes encode_idx_images(const Dataset& data) {
  Writer w;
  w.be32(kIdxImageMagic);
  w.be32(static_cast<std::uint32_t>(data.size()));
  w.be32(static_cast<std::uint32_t>(data.rows));
  w.be32(static_cast<std::uint32_t>(data.cols));
  for (double p : data.pixels) {
    w.out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0)));
  }
  return std::move(w.out);
}

Bytes encode_idx_labels(const Dataset& data) {
  Writer w;
  w.be32(kIdxLabelMagic);
  w.be32(static_cast<std::uint32_t>(data.size()));
  for (int l : data.labels) w.out.push_back(static_cast<std::uint8_t>(l));
  return std::move(w.out);
}

Bytes save_model(const BnnModel& model) {
  Writer w;
  w.raw("SBNN");
  w.le32(kModelFormatVersion);
  w.le32(static_cast<std::uint32_t>(model.depth()));
  w.le32(static_cast<std::uint32_t>(model.metadata().training_mode));
  w.le32(static_cast<std::uint32_t>(model.metadata().presentations));
  for (const auto& l : model.layers()) {
    w.le64(l.weights.rows());
    w.le64(l.weights.cols());
    for (Word word : l.weights.data()) w.le64(word);
    for (double v : l.mu) w.f64(v);
    for (double v : l.scale) w.f64(v);
  }
  append_crc(w);
  return std::move(w.out);
}

BnnModel load_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) fail(ErrorCode::TruncatedError, "model file is too short");
  if (std::memcmp(bytes.data(), "SBNN", 4) != 0) fail(ErrorCode::FormatError, "not an SBNN model file");
  Reader head(bytes.subspan(4, 4), "model file");
  const std::uint32_t version = head.le32();
  if (version != kModelFormatVersion) {
    fail(ErrorCode::VersionMismatch, "model format version " + std::to_string(version) +
                                         ", this build reads " + std::to_string(kModelFormatVersion));
  }
  Reader r(verified_payload(bytes, "model file").subspan(8), "model file");
  const std::uint32_t depth = r.le32();
  const std::uint32_t mode = r.le32();
  if (mode > static_cast<std::uint32_t>(InputMode::BlackWhite)) {
    fail(ErrorCode::FormatError, "unknown training mode " + std::to_string(mode));
  }
  ModelMetadata meta{static_cast<InputMode>(mode), static_cast<int>(r.le32())};
  std::vector<BnnModel::Layer> layers(depth);
  for (auto& l : layers) {
    const std::uint64_t rows = r.le64();
    const std::uint64_t cols = r.le64();
    if (rows > (1U << 24) || cols > (1U << 24)) fail(ErrorCode::FormatError, "implausible layer shape");
    l.weights = BitMatrix(rows, cols);
    const std::size_t stride = l.weights.words_per_row();
    for (std::size_t i = 0; i < rows; ++i) {
      auto row = l.weights.row_words(i);
      for (std::size_t k = 0; k < stride; ++k) row[k] = r.le64();
      if (stride > 0 && (row[stride - 1] & ~tail_mask(cols)) != 0) {
        fail(ErrorCode::FormatError, "weight padding bits are set");
      }
    }
    l.mu.resize(rows);
    l.scale.resize(rows);
    for (double& v : l.mu) v = r.f64();
    for (double& v : l.scale) v = r.f64();
  }
  if (r.remaining() != 0) fail(ErrorCode::FormatError, "trailing bytes after the last layer");
  return BnnModel(std::move(layers), meta, BnnModel::WidthCheck::Skip);
}

void save_model_file(const BnnModel& model, const std::string& path) {
  write_file(path, save_model(model));
}

BnnModel load_model_file(const std::string& path) { return load_model(read_file(path)); }

namespace {

void write_matrix(Writer& w, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
  }
}

Matrix read_matrix(Reader& r, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = r.f64();
  }
  return m;
}

}  // namespace

Bytes save_train_state(const TrainState& state) {
  Writer w;
  w.raw("SBNT");
  w.le32(kModelFormatVersion);
  w.le32(static_cast<std::uint32_t>(state.layers.size()));
  w.le64(static_cast<std::uint64_t>(state.step));
  for (const auto& l : state.layers) {
    w.le64(static_cast<std::uint64_t>(l.weights.rows()));
    w.le64(static_cast<std::uint64_t>(l.weights.cols()));
    write_matrix(w, l.weights);
    write_matrix(w, l.adam_m);
    write_matrix(w, l.adam_v);
    write_matrix(w, l.running_mean);
    write_matrix(w, l.running_std);
  }
  append_crc(w);
  return std::move(w.out);
}

TrainState load_train_state(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) fail(ErrorCode::TruncatedError, "checkpoint is too short");
  if (std::memcmp(bytes.data(), "SBNT", 4) != 0) fail(ErrorCode::FormatError, "not an SBNN checkpoint");
  Reader head(bytes.subspan(4, 4), "checkpoint");
  if (head.le32() != kModelFormatVersion) fail(ErrorCode::VersionMismatch, "checkpoint version differs");
  Reader r(verified_payload(bytes, "checkpoint").subspan(8), "checkpoint");
  TrainState s;
  s.layers.resize(r.le32());
  s.step = static_cast<std::int64_t>(r.le64());
  for (auto& l : s.layers) {
    const auto rows = static_cast<Eigen::Index>(r.le64());
    const auto cols = static_cast<Eigen::Index>(r.le64());
    if (rows > (1 << 24) || cols > (1 << 24)) fail(ErrorCode::FormatError, "implausible layer shape");
    l.weights = read_matrix(r, rows, cols);
    l.adam_m = read_matrix(r, rows, cols);
    l.adam_v = read_matrix(r, rows, cols);
    l.running_mean = read_matrix(r, 1, rows);
    l.running_std = read_matrix(r, 1, rows);
  }
  if (r.remaining() != 0) fail(ErrorCode::FormatError, "trailing bytes in checkpoint");
  return s;
}

}  // namespace sbnn
