#include "ostf/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "ostf/errors.hpp"

namespace ostf::img {

Image load_png(const std::filesystem::path& path) {
  png_image pim;
  std::memset(&pim, 0, sizeof(pim));
  pim.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pim, path.string().c_str()))
    throw IoError("cannot read PNG " + path.string() + ": " + pim.message);
  pim.format = PNG_FORMAT_RGB;
  Image im(static_cast<int>(pim.width), static_cast<int>(pim.height));
  if (!png_image_finish_read(&pim, nullptr, im.data.data(), 0, nullptr)) {
    png_image_free(&pim);
    throw CodecError("PNG decode failed for " + path.string() + ": " + pim.message);
  }
  return im;
}

void save_png(const Image& im, const std::filesystem::path& path) {
  png_image pim;
  std::memset(&pim, 0, sizeof(pim));
  pim.version = PNG_IMAGE_VERSION;
  pim.width = static_cast<png_uint_32>(im.width);
  pim.height = static_cast<png_uint_32>(im.height);
  pim.format = PNG_FORMAT_RGB;
  // Outputs are pipeline artifacts, re-read far more often than stored long
  // term; favor encode speed over a few percent of file size.
  pim.flags = PNG_IMAGE_FLAG_FAST;
  if (!png_image_write_to_file(&pim, path.string().c_str(), 0, im.data.data(), 0, nullptr))
    throw CodecError("PNG encode failed for " + path.string() + ": " + pim.message);
}

namespace {

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_trampoline(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

}  // namespace

std::vector<std::uint8_t> encode_jpeg(const Image& im, int quality) {
  if (quality < 1 || quality > 100) throw ParamError("jpeg quality must be in [1,100]");
  jpeg_compress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_trampoline;

  unsigned char* buf = nullptr;
  unsigned long buf_size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    if (buf) free(buf);
    throw CodecError(std::string("JPEG encode failed: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buf, &buf_size);
  cinfo.image_width = static_cast<JDIMENSION>(im.width);
  cinfo.image_height = static_cast<JDIMENSION>(im.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);  // baseline
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    const JSAMPROW row = const_cast<JSAMPROW>(
        im.data.data() + static_cast<std::size_t>(cinfo.next_scanline) * im.width * 3);
    jpeg_write_scanlines(&cinfo, const_cast<JSAMPARRAY>(&row), 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::vector<std::uint8_t> out(buf, buf + buf_size);
  free(buf);
  return out;
}

Image decode_jpeg(const std::vector<std::uint8_t>& bytes) {
  jpeg_decompress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_trampoline;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw CodecError(std::string("JPEG decode failed: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  Image im(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = im.data.data() + static_cast<std::size_t>(cinfo.output_scanline) * im.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return im;
}

namespace {

bool has_png_magic(const unsigned char* b, std::size_t n) {
  static const unsigned char magic[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  return n >= 8 && std::memcmp(b, magic, 8) == 0;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         std::uint32_t(p[3]);
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  unsigned char head[8] = {0};
  in.read(reinterpret_cast<char*>(head), 8);
  in.close();
  if (has_png_magic(head, 8)) return load_png(path);
  if (head[0] == 0xff && head[1] == 0xd8) return decode_jpeg(read_file(path));
  throw CodecError("unsupported image format: " + path.string());
}

void save_image(const Image& im, const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".png" || ext == ".PNG") {
    save_png(im, path);
    return;
  }
  if (ext == ".jpg" || ext == ".jpeg" || ext == ".JPG" || ext == ".JPEG") {
    const std::vector<std::uint8_t> bytes = encode_jpeg(im, 95);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    return;
  }
  throw ParamError("unsupported output extension: " + path.string());
}

std::pair<int, int> read_image_size(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> b = read_file(path);
  if (has_png_magic(b.data(), b.size())) {
    // IHDR is the first chunk: length(4) type(4) width(4) height(4)
    if (b.size() < 24) throw CodecError("truncated PNG: " + path.string());
    return {static_cast<int>(be32(&b[16])), static_cast<int>(be32(&b[20]))};
  }
  if (b.size() >= 4 && b[0] == 0xff && b[1] == 0xd8) {
    std::size_t i = 2;
    while (i + 9 < b.size()) {
      if (b[i] != 0xff) {
        ++i;
        continue;
      }
      const std::uint8_t marker = b[i + 1];
      if (marker == 0xd8 || (marker >= 0xd0 && marker <= 0xd9)) {
        i += 2;
        continue;
      }
      const std::size_t seg_len = (std::size_t(b[i + 2]) << 8) | b[i + 3];
      const bool is_sof = (marker >= 0xc0 && marker <= 0xcf) && marker != 0xc4 && marker != 0xc8 &&
                          marker != 0xcc;
      if (is_sof) {
        const int h = (int(b[i + 5]) << 8) | b[i + 6];
        const int w = (int(b[i + 7]) << 8) | b[i + 8];
        return {w, h};
      }
      i += 2 + seg_len;
    }
    throw CodecError("no SOF marker in JPEG: " + path.string());
  }
  throw CodecError("unsupported image format: " + path.string());
}

}  // namespace ostf::img
