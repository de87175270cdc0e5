#include "framelog/image.hpp"

#include <cctype>
#include <fstream>
#include <string>

#include "framelog/error.hpp"

namespace framelog::data {
namespace {

int read_header_int(std::istream& in, const std::filesystem::path& path) {
  int c = in.peek();
  while (c != EOF) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
    c = in.peek();
  }
  int v = 0;
  if (!(in >> v)) throw FormatError("malformed PPM header in '" + path.string() + "'");
  return v;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path.string() + "'");
  std::string magic;
  in >> magic;
  if (magic != "P6") throw FormatError("'" + path.string() + "' is not a binary PPM");
  Image img;
  img.width = read_header_int(in, path);
  img.height = read_header_int(in, path);
  const int maxval = read_header_int(in, path);
  if (maxval != 255 || img.width < 1 || img.height < 1) {
    throw FormatError("unsupported PPM geometry in '" + path.string() + "'");
  }
  in.get();  // single whitespace before raster
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.rgb.size())) {
    throw FormatError("truncated PPM raster in '" + path.string() + "'");
  }
  return img;
}

}  // namespace framelog::data
