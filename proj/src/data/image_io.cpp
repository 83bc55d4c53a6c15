#include "nvs/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "nvs/errors.hpp"

namespace nvs {

std::uint8_t quantize(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

Image quantized(const Image& img) {
  Image out = img;
  for (auto& v : out.data) v = static_cast<float>(quantize(v)) / 255.0f;
  return out;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  return f;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Parses "<magic> <w> <h> <third>" with '#' comments and returns the offset of
// the first payload byte.
std::size_t parse_header(const std::string& s, const std::string& path, const char* magic,
                         int& w, int& h, std::string& third) {
  std::size_t pos = 0;
  auto token = [&]() {
    for (;;) {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
      if (pos < s.size() && s[pos] == '#') {
        while (pos < s.size() && s[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return s.substr(start, pos - start);
  };
  if (token() != magic) throw IoError(path + ": expected " + magic + " header at offset 0");
  try {
    w = std::stoi(token());
    h = std::stoi(token());
  } catch (const std::exception&) {
    throw IoError(path + ": malformed size in header");
  }
  third = token();
  if (w <= 0 || h <= 0 || third.empty()) throw IoError(path + ": malformed header");
  return pos + 1;  // single whitespace byte ends the header
}

}  // namespace

void write_ppm(const std::string& path, const Image& img) {
  auto f = open_out(path);
  f << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<char> buf(static_cast<std::size_t>(3 * img.width * img.height));
  std::size_t k = 0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) buf[k++] = static_cast<char>(quantize(img.at(c, y, x)));
    }
  }
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("write failed for " + path);
}

Image read_ppm(const std::string& path) {
  const std::string s = slurp(path);
  int w = 0, h = 0;
  std::string maxv;
  const std::size_t off = parse_header(s, path, "P6", w, h, maxv);
  if (maxv != "255") throw IoError(path + ": only 8-bit PPM is supported");
  const std::size_t need = static_cast<std::size_t>(3 * w * h);
  if (s.size() < off + need) {
    throw IoError(path + ": truncated pixel data at offset " + std::to_string(s.size()));
  }
  Image img(w, h);
  std::size_t k = off;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(c, y, x) = static_cast<float>(static_cast<unsigned char>(s[k++])) / 255.0f;
      }
    }
  }
  return img;
}

void write_pgm(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& v) {
  if (v.size() != static_cast<std::size_t>(width * height)) {
    throw ShapeError("write_pgm: value count does not match " + std::to_string(width) + "x" +
                     std::to_string(height));
  }
  auto f = open_out(path);
  f << "P5\n" << width << ' ' << height << "\n255\n";
  f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size()));
  if (!f) throw IoError("write failed for " + path);
}

std::vector<std::uint8_t> read_pgm(const std::string& path, int& width, int& height) {
  const std::string s = slurp(path);
  std::string maxv;
  const std::size_t off = parse_header(s, path, "P5", width, height, maxv);
  const std::size_t need = static_cast<std::size_t>(width * height);
  if (s.size() < off + need) {
    throw IoError(path + ": truncated pixel data at offset " + std::to_string(s.size()));
  }
  return std::vector<std::uint8_t>(s.begin() + static_cast<std::ptrdiff_t>(off),
                                   s.begin() + static_cast<std::ptrdiff_t>(off + need));
}

void write_pfm(const std::string& path, int width, int height, const std::vector<double>& v) {
  if (v.size() != static_cast<std::size_t>(width * height)) {
    throw ShapeError("write_pfm: value count does not match " + std::to_string(width) + "x" +
                     std::to_string(height));
  }
  auto f = open_out(path);
  f << "Pf\n" << width << ' ' << height << "\n-1.0\n";
  std::vector<char> buf(v.size() * 4);
  std::size_t k = 0;
  for (int y = height - 1; y >= 0; --y) {
    for (int x = 0; x < width; ++x) {
      const float fv = static_cast<float>(v[static_cast<std::size_t>(y * width + x)]);
      std::uint32_t bits = std::bit_cast<std::uint32_t>(fv);
      for (int b = 0; b < 4; ++b) buf[k++] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
  }
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("write failed for " + path);
}

std::vector<double> read_pfm(const std::string& path, int& width, int& height) {
  const std::string s = slurp(path);
  std::string scale;
  const std::size_t off = parse_header(s, path, "Pf", width, height, scale);
  double sc = 0;
  try {
    sc = std::stod(scale);
  } catch (const std::exception&) {
    throw IoError(path + ": malformed PFM scale");
  }
  if (sc >= 0) throw IoError(path + ": only little-endian PFM (negative scale) is supported");
  const std::size_t n = static_cast<std::size_t>(width * height);
  if (s.size() < off + 4 * n) {
    throw IoError(path + ": truncated PFM data at offset " + std::to_string(s.size()));
  }
  std::vector<double> v(n);
  std::size_t k = off;
  for (int y = height - 1; y >= 0; --y) {
    for (int x = 0; x < width; ++x) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[k++])) << (8 * b);
      }
      v[static_cast<std::size_t>(y * width + x)] = std::bit_cast<float>(bits);
    }
  }
  return v;
}

template <typename T>
Tensor<T> image_to_tensor(const Image& img) {
  std::vector<T> v(img.data.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(img.data[i]) * T(2) - T(1);
  return Tensor<T>::from_data({3, img.height, img.width}, std::move(v));
}

template <typename T>
Image tensor_to_image(const Tensor<T>& t) {
  if (t.rank() != 3 || t.dim(0) != 3) {
    throw ShapeError("tensor_to_image expects [3,H,W], got " + shape_str(t.shape()));
  }
  Image img(static_cast<int>(t.dim(2)), static_cast<int>(t.dim(1)));
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double v = (static_cast<double>(t.value(static_cast<std::int64_t>(i))) + 1.0) * 0.5;
    img.data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return img;
}

template Tensor<float> image_to_tensor<float>(const Image&);
template Tensor<double> image_to_tensor<double>(const Image&);
template Image tensor_to_image<float>(const Tensor<float>&);
template Image tensor_to_image<double>(const Tensor<double>&);

}  // namespace nvs
