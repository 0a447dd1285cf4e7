#include "ircr/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ircr::io {

namespace {

constexpr std::array<char, 4> kMagic{'I', 'R', 'C', 'R'};

std::size_t dtype_width(DType d) {
  switch (d) {
    case DType::f64: return 8;
    case DType::i32: return 4;
    case DType::u8: return 1;
  }
  throw std::runtime_error("unknown dtype");
}

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFFu));
  }
}

template <typename U>
U get_le(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

std::size_t element_count(const std::vector<std::uint32_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

TensorFile make_file(DType dtype, const std::vector<std::size_t>& dims) {
  TensorFile f;
  f.dtype = dtype;
  for (auto d : dims) f.dims.push_back(static_cast<std::uint32_t>(d));
  return f;
}

std::vector<std::uint8_t> serialize(const TensorFile& f) {
  std::ostringstream os(std::ios::binary);
  write_tensor_file(os, f);
  const std::string s = os.str();
  return {s.begin(), s.end()};
}

TensorFile to_file(const Tensor& t) {
  TensorFile f = make_file(DType::f64, t.dims());
  f.payload.reserve(t.size() * 8);
  for (double v : t.values()) put_le(f.payload, std::bit_cast<std::uint64_t>(v));
  return f;
}

TensorFile to_file(const InstanceLabelMap& labels) {
  TensorFile f = make_file(DType::i32, {labels.height(), labels.width()});
  f.payload.reserve(labels.size() * 4);
  for (std::int32_t v : labels.labels()) put_le(f.payload, static_cast<std::uint32_t>(v));
  return f;
}

TensorFile to_file(const BinaryMask& mask) {
  TensorFile f = make_file(DType::u8, {mask.height(), mask.width()});
  f.payload.assign(mask.raw().begin(), mask.raw().end());
  return f;
}

void write_to(const std::filesystem::path& path, const TensorFile& f) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  write_tensor_file(os, f);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

TensorFile read_from(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  try {
    return read_tensor_file(is);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace

void write_tensor_file(std::ostream& out, const TensorFile& file) {
  if (file.dims.size() > 255) throw std::invalid_argument("too many dims");
  if (file.payload.size() != element_count(file.dims) * dtype_width(file.dtype)) {
    throw std::invalid_argument("payload size does not match dims");
  }
  std::vector<std::uint8_t> header(kMagic.begin(), kMagic.end());
  header.push_back(kTensorFormatVersion);
  header.push_back(static_cast<std::uint8_t>(file.dtype));
  header.push_back(static_cast<std::uint8_t>(file.dims.size()));
  for (auto d : file.dims) put_le(header, d);
  out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(file.payload.data()),
            static_cast<std::streamsize>(file.payload.size()));
}

TensorFile read_tensor_file(std::istream& in) {
  std::array<char, 7> head{};
  if (!in.read(head.data(), head.size())) throw std::runtime_error("truncated header");
  if (!std::equal(kMagic.begin(), kMagic.end(), head.begin())) {
    throw std::runtime_error("bad magic (not an IRCR-T file)");
  }
  if (static_cast<std::uint8_t>(head[4]) != kTensorFormatVersion) {
    throw std::runtime_error("unsupported IRCR-T version");
  }
  const auto dtype_raw = static_cast<std::uint8_t>(head[5]);
  if (dtype_raw > 2) throw std::runtime_error("unknown dtype code");
  TensorFile f;
  f.dtype = static_cast<DType>(dtype_raw);
  const std::size_t ndim = static_cast<std::uint8_t>(head[6]);
  std::vector<std::uint8_t> dimbuf(ndim * 4);
  if (!in.read(reinterpret_cast<char*>(dimbuf.data()), static_cast<std::streamsize>(dimbuf.size()))) {
    throw std::runtime_error("truncated dims");
  }
  for (std::size_t i = 0; i < ndim; ++i) f.dims.push_back(get_le<std::uint32_t>(&dimbuf[i * 4]));
  f.payload.resize(element_count(f.dims) * dtype_width(f.dtype));
  if (!in.read(reinterpret_cast<char*>(f.payload.data()), static_cast<std::streamsize>(f.payload.size()))) {
    throw std::runtime_error("truncated payload");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing bytes");
  return f;
}

std::vector<std::uint8_t> encode(const Tensor& t) { return serialize(to_file(t)); }
std::vector<std::uint8_t> encode(const InstanceLabelMap& labels) { return serialize(to_file(labels)); }
std::vector<std::uint8_t> encode(const BinaryMask& mask) { return serialize(to_file(mask)); }

Tensor decode_tensor(const TensorFile& f) {
  if (f.dtype != DType::f64) throw std::runtime_error("expected f64 tensor");
  std::vector<std::size_t> dims(f.dims.begin(), f.dims.end());
  std::vector<double> data(element_count(f.dims));
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = std::bit_cast<double>(get_le<std::uint64_t>(&f.payload[i * 8]));
  }
  return Tensor(std::move(dims), std::move(data));
}

InstanceLabelMap decode_labels(const TensorFile& f) {
  if (f.dtype != DType::i32 || f.dims.size() != 2) throw std::runtime_error("expected 2-D i32 label map");
  std::vector<std::int32_t> labels(element_count(f.dims));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = static_cast<std::int32_t>(get_le<std::uint32_t>(&f.payload[i * 4]));
  }
  return InstanceLabelMap(f.dims[0], f.dims[1], std::move(labels));
}

BinaryMask decode_mask(const TensorFile& f) {
  if (f.dtype != DType::u8 || f.dims.size() != 2) throw std::runtime_error("expected 2-D u8 mask");
  BinaryMask m(f.dims[0], f.dims[1]);
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, f.payload[i] != 0);
  return m;
}

void save(const std::filesystem::path& path, const Tensor& t) { write_to(path, to_file(t)); }
void save(const std::filesystem::path& path, const InstanceLabelMap& l) { write_to(path, to_file(l)); }
void save(const std::filesystem::path& path, const BinaryMask& m) { write_to(path, to_file(m)); }

Tensor load_tensor(const std::filesystem::path& path) {
  const TensorFile f = read_from(path);
  try {
    return decode_tensor(f);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

InstanceLabelMap load_labels(const std::filesystem::path& path) {
  const TensorFile f = read_from(path);
  try {
    return decode_labels(f);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

BinaryMask load_mask(const std::filesystem::path& path) {
  const TensorFile f = read_from(path);
  try {
    return decode_mask(f);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace ircr::io
