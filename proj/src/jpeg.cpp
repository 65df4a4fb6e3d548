#include "terratile/jpeg.hpp"

#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

// clang-format off
#include <jpeglib.h>
// clang-format on

namespace terratile {

namespace {

// libjpeg reports fatal errors through error_exit; we longjmp back to the
// setjmp point in the calling C-style helper and convert to an exception
// outside of it so no C++ destructors are skipped.
struct ErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void on_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<ErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, mgr->message);
  std::longjmp(mgr->jump, 1);
}

void on_output_message(j_common_ptr) {}

bool compress(const std::uint8_t* pixels, int width, int height, int quality,
              unsigned char** out, unsigned long* out_size, char* error) {
  jpeg_compress_struct cinfo;
  ErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = on_error_exit;
  err.base.output_message = on_output_message;
  if (setjmp(err.jump)) {
    std::strncpy(error, err.message, JMSG_LENGTH_MAX);
    jpeg_destroy_compress(&cinfo);
    return false;
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, out, out_size);
  cinfo.image_width = static_cast<JDIMENSION>(width);
  cinfo.image_height = static_cast<JDIMENSION>(height);
  cinfo.input_components = 1;
  cinfo.in_color_space = JCS_GRAYSCALE;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  cinfo.optimize_coding = TRUE;
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPLE*>(pixels + static_cast<std::size_t>(cinfo.next_scanline) * width);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  return true;
}

struct DecodeResult {
  int width = 0;
  int height = 0;
};

bool read_header(const std::uint8_t* data, std::size_t size, DecodeResult* dims,
                 std::uint8_t* pixels, char* error) {
  jpeg_decompress_struct cinfo;
  ErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = on_error_exit;
  err.base.output_message = on_output_message;
  if (setjmp(err.jump)) {
    std::strncpy(error, err.message, JMSG_LENGTH_MAX);
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, data, static_cast<unsigned long>(size));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_GRAYSCALE;
  if (pixels == nullptr) {
    dims->width = static_cast<int>(cinfo.image_width);
    dims->height = static_cast<int>(cinfo.image_height);
    jpeg_destroy_decompress(&cinfo);
    return true;
  }
  jpeg_start_decompress(&cinfo);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = pixels + static_cast<std::size_t>(cinfo.output_scanline) * cinfo.output_width;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

}  // namespace

std::vector<std::uint8_t> encode_jpeg(const Gray8& image, int quality) {
  if (image.rows() == 0 || image.cols() == 0) throw FormatError("cannot encode an empty raster");
  if (quality < 1 || quality > 100) throw FormatError("JPEG quality out of range");
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  char error[JMSG_LENGTH_MAX] = {};
  const bool ok = compress(image.data(), static_cast<int>(image.cols()),
                           static_cast<int>(image.rows()), quality, &buffer, &size, error);
  std::vector<std::uint8_t> out;
  if (ok) out.assign(buffer, buffer + size);
  std::free(buffer);
  if (!ok) throw FormatError(std::string("JPEG encode failed: ") + error);
  return out;
}

std::vector<std::uint8_t> encode_tile_jpeg(const Gray8& image) {
  auto blob = encode_jpeg(image, kDefaultJpegQuality);
  if (blob.size() > kTileHardCapBytes) blob = encode_jpeg(image, kFallbackJpegQuality);
  return blob;
}

Gray8 decode_jpeg(std::span<const std::uint8_t> blob) {
  if (!looks_like_jpeg(blob)) throw FormatError("not a JPEG stream");
  char error[JMSG_LENGTH_MAX] = {};
  DecodeResult dims;
  if (!read_header(blob.data(), blob.size(), &dims, nullptr, error)) {
    throw FormatError(std::string("JPEG header: ") + error);
  }
  Gray8 image(dims.height, dims.width);
  if (!read_header(blob.data(), blob.size(), &dims, image.data(), error)) {
    throw FormatError(std::string("JPEG decode: ") + error);
  }
  return image;
}

bool looks_like_jpeg(std::span<const std::uint8_t> blob) {
  return blob.size() >= 4 && blob[0] == 0xFF && blob[1] == 0xD8;
}

}  // namespace terratile
