#include "warpadam/checkpoint.hpp"

#include <fstream>
#include <iterator>

#include "warpadam/binio.hpp"
#include "warpadam/error.hpp"

namespace warpadam {

std::string encode_warps(const WarpSet& warps) {
  std::string out = "WARP";
  binio::put_u32(out, kWarpCheckpointVersion);
  binio::put_u64(out, warps.size());
  for (const auto& P : warps) {
    binio::put_u8(out, static_cast<std::uint8_t>(P.form()));
    binio::put_u64(out, P.dim());
    binio::put_u64(out, P.form() == WarpForm::Kronecker ? P.factor_a() : 0);
    binio::put_u64(out, P.form() == WarpForm::Kronecker ? P.factor_b() : 0);
    for (double x : P.entries()) binio::put_f64(out, x);
  }
  return out;
}

WarpSet decode_warps(const std::string& bytes) {
  binio::Reader in(bytes, "warp checkpoint");
  if (in.take(4) != "WARP") throw ParseError("warp checkpoint: bad magic");
  const std::uint32_t version = in.u32();
  if (version != kWarpCheckpointVersion) {
    throw ParseError("warp checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint64_t count = in.u64();
  WarpSet warps;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint8_t tag = in.u8();
    if (tag > 3) throw ParseError("warp checkpoint: unknown form tag " + std::to_string(tag));
    const auto form = static_cast<WarpForm>(tag);
    const std::uint64_t dim = in.u64();
    const std::uint64_t a = in.u64();
    const std::uint64_t b = in.u64();
    std::uint64_t n = 0;
    switch (form) {
      case WarpForm::Identity: n = 0; break;
      case WarpForm::Diagonal: n = dim; break;
      case WarpForm::Dense: n = dim * dim; break;
      case WarpForm::Kronecker: n = a * a + b * b; break;
    }
    if (n > in.remaining() / 8) throw ParseError("warp checkpoint: truncated entries for matrix " + std::to_string(i));
    std::vector<double> entries(n);
    for (auto& x : entries) x = in.f64();
    try {
      switch (form) {
        case WarpForm::Identity: warps.push_back(WarpMatrix::identity(dim)); break;
        case WarpForm::Diagonal: warps.push_back(WarpMatrix::diagonal(std::move(entries))); break;
        case WarpForm::Dense: warps.push_back(WarpMatrix::dense(dim, std::move(entries))); break;
        case WarpForm::Kronecker: {
          WarpMatrix k = WarpMatrix::identity_as(WarpForm::Kronecker, dim, a, b);
          warps.push_back(k.with_entries(std::move(entries)));
          break;
        }
      }
    } catch (const ShapeError& e) {
      throw ParseError(std::string("warp checkpoint: ") + e.what());
    }
  }
  if (!in.done()) throw ParseError("warp checkpoint: trailing bytes");
  return warps;
}

void save_warps(const WarpSet& warps, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_warps(warps);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

WarpSet load_warps(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_warps(bytes);
}

}  // namespace warpadam
