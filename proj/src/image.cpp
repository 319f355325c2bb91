#include "mammofuse/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>

#include "mammofuse/error.hpp"
#include "mammofuse/io_util.hpp"

namespace mammofuse {

namespace {

void check_dims(int width, int height) {
  if (width < 0 || height < 0) throw std::invalid_argument("negative image dimension");
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

GrayImage::GrayImage(int width, int height, double fill) : width_(width), height_(height) {
  check_dims(width, height);
  if (!(fill >= 0.0 && fill <= 1.0)) throw std::invalid_argument("fill value outside [0,1]");
  data_.assign(static_cast<std::size_t>(width) * height, fill);
}

GrayImage::GrayImage(int width, int height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data)) {
  check_dims(width, height);
  if (data_.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("image data length " + std::to_string(data_.size()) +
                                " != " + std::to_string(width) + "x" + std::to_string(height));
  for (double v : data_)
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("image intensity outside [0,1]");
}

double GrayImage::clamped(int x, int y) const {
  x = std::clamp(x, 0, width_ - 1);
  y = std::clamp(y, 0, height_ - 1);
  return at(x, y);
}

RgbImage::RgbImage(GrayImage r, GrayImage g, GrayImage b)
    : planes_{std::move(r), std::move(g), std::move(b)} {
  for (const auto& p : planes_)
    if (p.width() != planes_[0].width() || p.height() != planes_[0].height())
      throw std::invalid_argument("RGB planes differ in shape");
}

// ---- PGM --------------------------------------------------------------------

namespace {

GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  std::size_t pos = 2;
  auto next_token = [&]() -> long {
    while (pos < bytes.size()) {
      const char c = static_cast<char>(bytes[pos]);
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000) throw FormatError("PGM header value too large in '" + name + "'");
      ++pos;
      any = true;
    }
    if (!any) throw FormatError("malformed PGM header in '" + name + "'");
    return v;
  };
  const long w = next_token();
  const long h = next_token();
  const long maxval = next_token();
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    throw FormatError("malformed PGM header in '" + name + "'");
  ++pos;  // single whitespace before raster
  if (maxval != 255 && maxval != 65535)
    throw FormatError("unsupported PGM maxval " + std::to_string(maxval) + " in '" + name +
                      "' (expected 255 or 65535)");
  if (w < 1 || h < 1) throw FormatError("empty PGM image '" + name + "'");
  const std::size_t bpp = maxval == 255 ? 1 : 2;
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() - pos < n * bpp) throw FormatError("truncated PGM raster in '" + name + "'");
  std::vector<double> data(n);
  const double scale = static_cast<double>(maxval);
  for (std::size_t i = 0; i < n; ++i) {
    unsigned v = bpp == 1 ? bytes[pos + i]
                          : (static_cast<unsigned>(bytes[pos + 2 * i]) << 8) | bytes[pos + 2 * i + 1];
    data[i] = v / scale;
  }
  return GrayImage(static_cast<int>(w), static_cast<int>(h), std::move(data));
}

unsigned quantize(double v, unsigned maxval) {
  return static_cast<unsigned>(std::lround(clamp01(v) * maxval));
}

// ---- PNG --------------------------------------------------------------------

struct PngReadCtx {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos;
};

void png_read_mem(png_structp png, png_bytep out, png_size_t n) {
  auto* ctx = static_cast<PngReadCtx*>(png_get_io_ptr(png));
  if (ctx->bytes->size() - ctx->pos < n) png_error(png, "truncated PNG data");
  std::copy_n(ctx->bytes->data() + ctx->pos, n, out);
  ctx->pos += n;
}

GrayImage decode_png(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> raster;
  int w = 0, h = 0, depth = 0, color = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG '" + name + "'");
  }
  PngReadCtx ctx{&bytes, 0};
  png_set_read_fn(png, &ctx, png_read_mem);
  png_read_info(png, info);
  w = static_cast<int>(png_get_image_width(png, info));
  h = static_cast<int>(png_get_image_height(png, info));
  depth = png_get_bit_depth(png, info);
  color = png_get_color_type(png, info);
  if (color != PNG_COLOR_TYPE_GRAY || (depth != 8 && depth != 16)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unsupported PNG '" + name + "': need single-channel 8- or 16-bit gray (color type " +
                      std::to_string(color) + ", bit depth " + std::to_string(depth) + ")");
  }
  const std::size_t stride = static_cast<std::size_t>(w) * (depth / 8);
  raster.resize(stride * static_cast<std::size_t>(h));
  rows.resize(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = raster.data() + stride * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<double> data(n);
  if (depth == 8) {
    for (std::size_t i = 0; i < n; ++i) data[i] = raster[i] / 255.0;
  } else {
    for (std::size_t i = 0; i < n; ++i)
      data[i] = ((static_cast<unsigned>(raster[2 * i]) << 8) | raster[2 * i + 1]) / 65535.0;
  }
  return GrayImage(w, h, std::move(data));
}

void png_write_mem(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), n);
}
void png_flush_noop(png_structp) {}

}  // namespace

GrayImage load_gray(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::vector<std::uint8_t> bytes;
  try {
    bytes = io::read_file(path);
  } catch (const FormatError&) {
    throw FormatError("cannot open image '" + name + "'");
  }
  static constexpr std::uint8_t kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngMagic, kPngMagic + 8, bytes.begin()))
    return decode_png(bytes, name);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes, name);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '6' || bytes[1] == '3'))
    throw FormatError("multi-channel PNM not supported: '" + name + "'");
  throw FormatError("unrecognized image format: '" + name + "'");
}

void save_pgm(const GrayImage& img, const std::filesystem::path& path, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("PGM bit depth must be 8 or 16");
  const unsigned maxval = bit_depth == 8 ? 255u : 65535u;
  std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n" +
                    std::to_string(maxval) + "\n";
  out.reserve(out.size() + img.size() * (bit_depth / 8));
  for (double v : img.data()) {
    const unsigned q = quantize(v, maxval);
    if (bit_depth == 16) out.push_back(static_cast<char>(q >> 8));
    out.push_back(static_cast<char>(q & 0xff));
  }
  io::write_file_atomic(path, out);
}

void save_png(const GrayImage& img, const std::filesystem::path& path, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("PNG bit depth must be 8 or 16");
  const unsigned maxval = bit_depth == 8 ? 255u : 65535u;
  const std::size_t stride = static_cast<std::size_t>(img.width()) * (bit_depth / 8);
  std::vector<std::uint8_t> raster(stride * img.height());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const unsigned q = quantize(img.data()[i], maxval);
    if (bit_depth == 8) {
      raster[i] = static_cast<std::uint8_t>(q);
    } else {
      raster[2 * i] = static_cast<std::uint8_t>(q >> 8);
      raster[2 * i + 1] = static_cast<std::uint8_t>(q & 0xff);
    }
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height()));
  for (int y = 0; y < img.height(); ++y) rows[static_cast<std::size_t>(y)] = raster.data() + stride * y;

  std::string out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG encoding failed for '" + path.string() + "'");
  }
  png_set_write_fn(png, &out, png_write_mem, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()),
               bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  io::write_file_atomic(path, out);
}

// ---- transforms -------------------------------------------------------------

GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw std::invalid_argument("resize target must be at least 1x1");
  if (img.empty()) throw std::invalid_argument("cannot resize an empty image");
  if (out_w == img.width() && out_h == img.height()) return img;

  struct Tap {
    int i0, i1;
    double f;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> t(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      double s = (o + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(in - 1));
      const int i0 = static_cast<int>(std::floor(s));
      const int i1 = std::min(i0 + 1, in - 1);
      t[static_cast<std::size_t>(o)] = {i0, i1, s - i0};
    }
    return t;
  };
  const auto tx = taps(img.width(), out_w);
  const auto ty = taps(img.height(), out_h);

  std::vector<double> out(static_cast<std::size_t>(out_w) * out_h);
  for (int y = 0; y < out_h; ++y) {
    const Tap& vy = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_w; ++x) {
      const Tap& vx = tx[static_cast<std::size_t>(x)];
      const double top = img.at(vx.i0, vy.i0) * (1 - vx.f) + img.at(vx.i1, vy.i0) * vx.f;
      const double bot = img.at(vx.i0, vy.i1) * (1 - vx.f) + img.at(vx.i1, vy.i1) * vx.f;
      out[static_cast<std::size_t>(y) * out_w + x] = clamp01(top * (1 - vy.f) + bot * vy.f);
    }
  }
  return GrayImage(out_w, out_h, std::move(out));
}

int crop_side(int width, int height, double s) {
  const int shorter = std::min(width, height);
  const long side = std::lround(std::sqrt(s) * shorter);
  return static_cast<int>(std::clamp<long>(side, 1, shorter));
}

GrayImage random_resized_crop(const GrayImage& img, int out, double scale_lo, double scale_hi, Rng& rng) {
  if (scale_lo > scale_hi) throw std::invalid_argument("random_resized_crop: scale_lo > scale_hi");
  if (img.empty()) throw std::invalid_argument("random_resized_crop: empty image");
  const double s = scale_lo + (scale_hi - scale_lo) * uniform01(rng);
  const int side = crop_side(img.width(), img.height(), s);
  const int x0 = static_cast<int>(uniform_int(rng, 0, img.width() - side));
  const int y0 = static_cast<int>(uniform_int(rng, 0, img.height() - side));

  GrayImage crop = img;
  if (side != img.width() || side != img.height()) {
    std::vector<double> buf(static_cast<std::size_t>(side) * side);
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) buf[static_cast<std::size_t>(y) * side + x] = img.at(x0 + x, y0 + y);
    crop = GrayImage(side, side, std::move(buf));
  }
  return resize_bilinear(crop, out, out);
}

GrayImage hflip(const GrayImage& img) {
  std::vector<double> out(img.size());
  const int w = img.width();
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < w; ++x) out[static_cast<std::size_t>(y) * w + x] = img.at(w - 1 - x, y);
  return GrayImage(w, img.height(), std::move(out));
}

GrayImage hflip(const GrayImage& img, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("flip probability outside [0,1]");
  return uniform01(rng) < p ? hflip(img) : img;
}

NormalizedImage normalize(const RgbImage& img, const ChannelStats& stats) {
  for (double s : stats.std)
    if (!(s > 0.0)) throw std::invalid_argument("normalization std must be positive");
  NormalizedImage out;
  out.width_ = img.width();
  out.height_ = img.height();
  for (int c = 0; c < 3; ++c) {
    const auto src = img.plane(c).data();
    auto& dst = out.planes_[static_cast<std::size_t>(c)];
    dst.resize(src.size());
    const double m = stats.mean[static_cast<std::size_t>(c)];
    const double sd = stats.std[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = (src[i] - m) / sd;
  }
  return out;
}

}  // namespace mammofuse
