#include "nvs/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace nvs {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename U>
void put(std::vector<unsigned char>& out, U v) {
  unsigned char b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  out.insert(out.end(), b, b + sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  template <typename U>
  U take(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  void take_bytes(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw IoError("checkpoint truncated at offset " + std::to_string(pos_) + " reading " + what);
    }
  }
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> serialize_checkpoint(const TensorTable& table) {
  std::vector<unsigned char> out{'N', 'V', 'S', 'C'};
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(table.size()));
  for (const auto& [name, t] : table) {
    if (name.size() > 0xFFFF) throw ValidationError("tensor name too long: " + name.substr(0, 32));
    if (t.shape.size() > 255) throw ValidationError("tensor rank too large: " + name);
    if (shape_numel(t.shape) != static_cast<std::int64_t>(t.data.size())) {
      throw ShapeError("tensor " + name + " data does not match shape " + shape_str(t.shape));
    }
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    const auto* p = reinterpret_cast<const unsigned char*>(t.data.data());
    out.insert(out.end(), p, p + t.data.size() * sizeof(float));
  }
  return out;
}

TensorTable parse_checkpoint(const std::vector<unsigned char>& bytes) {
  Reader r(bytes);
  char magic[4];
  r.take_bytes(magic, 4, "magic");
  if (std::memcmp(magic, "NVSC", 4) != 0) throw IoError("bad checkpoint magic at offset 0");
  const auto version = r.take<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " at offset 4");
  }
  const auto count = r.take<std::uint32_t>("tensor count");
  TensorTable table;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t start = r.pos();
    const auto len = r.take<std::uint16_t>("name length");
    std::string name(len, '\0');
    r.take_bytes(name.data(), len, "name");
    const auto rank = r.take<std::uint8_t>("rank");
    StoredTensor t;
    std::uint64_t numel = 1;
    for (int k = 0; k < rank; ++k) {
      const auto d = r.take<std::uint64_t>("dims");
      if (d > (std::uint64_t{1} << 40) || (d && numel > (std::uint64_t{1} << 40) / d)) {
        throw IoError("implausible dimension at offset " + std::to_string(r.pos() - 8));
      }
      numel *= d;
      t.shape.push_back(static_cast<std::int64_t>(d));
    }
    if (numel * sizeof(float) > r.size() - r.pos()) {
      throw IoError("checkpoint truncated at offset " + std::to_string(r.pos()) + " reading data of " +
                    name);
    }
    t.data.resize(numel);
    r.take_bytes(t.data.data(), numel * sizeof(float), "data");
    if (!table.emplace(name, std::move(t)).second) {
      throw IoError("duplicate tensor '" + name + "' at offset " + std::to_string(start));
    }
  }
  if (r.pos() != r.size()) {
    throw IoError("trailing bytes after checkpoint at offset " + std::to_string(r.pos()));
  }
  return table;
}

void save_checkpoint(const std::string& path, const TensorTable& table) {
  const auto bytes = serialize_checkpoint(table);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + tmp);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

TensorTable load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

template <typename T>
void store_params(TensorTable& table, const ParamStore<T>& ps) {
  for (std::size_t i = 0; i < ps.names().size(); ++i) {
    const auto& t = ps.tensors()[i];
    const auto v = t.values();
    table[ps.names()[i]] = StoredTensor{t.shape(), std::vector<float>(v.begin(), v.end())};
  }
}

template <typename T>
void restore_params(const TensorTable& table, ParamStore<T>& ps) {
  for (std::size_t i = 0; i < ps.names().size(); ++i) {
    const auto& name = ps.names()[i];
    const auto it = table.find(name);
    if (it == table.end()) throw IoError("checkpoint lacks tensor " + name);
    auto t = ps.tensors()[i];
    if (it->second.shape != t.shape()) {
      throw ShapeError("checkpoint tensor " + name + " has shape " + shape_str(it->second.shape) +
                       ", expected " + shape_str(t.shape()));
    }
    auto dst = t.mutable_values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<T>(it->second.data[k]);
  }
}

void put_scalar(TensorTable& table, const std::string& name, double value) {
  table[name] = StoredTensor{{}, {static_cast<float>(value)}};
}

double get_scalar(const TensorTable& table, const std::string& name) {
  const auto it = table.find(name);
  if (it == table.end() || it->second.data.size() != 1) {
    throw IoError("checkpoint lacks scalar " + name);
  }
  return it->second.data[0];
}

void put_text(TensorTable& table, const std::string& name, const std::string& text) {
  StoredTensor t{{static_cast<std::int64_t>(text.size())}, {}};
  for (unsigned char c : text) t.data.push_back(static_cast<float>(c));
  table[name] = std::move(t);
}

std::string get_text(const TensorTable& table, const std::string& name) {
  const auto it = table.find(name);
  if (it == table.end() || it->second.shape.size() != 1) throw IoError("checkpoint lacks text " + name);
  std::string out;
  for (float v : it->second.data) {
    if (v < 0 || v > 255 || v != static_cast<float>(static_cast<int>(v))) {
      throw IoError("checkpoint text " + name + " holds a non-byte value");
    }
    out.push_back(static_cast<char>(static_cast<int>(v)));
  }
  return out;
}

template void store_params(TensorTable&, const ParamStore<float>&);
template void store_params(TensorTable&, const ParamStore<double>&);
template void restore_params(const TensorTable&, ParamStore<float>&);
template void restore_params(const TensorTable&, ParamStore<double>&);

}  // namespace nvs
