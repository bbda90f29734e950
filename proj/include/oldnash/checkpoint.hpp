#ifndef OLDNASH_CHECKPOINT_HPP
#define OLDNASH_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "oldnash/grid.hpp"

namespace oldnash {

// Binary field checkpoint, little-endian:
//   magic "OLDN" | u32 version (=1) | u32 nx | u32 ny | u32 nsnap | u32 ncomp (=2)
//   then nsnap times: interior u-face array ((nx-1)*ny doubles) followed by
//   interior v-face array (nx*(ny-1) doubles).
// Round-trips are bitwise exact.

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_checkpoint(const std::string& path, const std::vector<VelocityField>& snaps) {
  if (snaps.empty()) throw Error(ErrorCode::invalid_argument, "checkpoint: nothing to write");
  const Grid& g = *snaps[0].grid;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::io_failed, "cannot open for write: " + path);
  os.write("OLDN", 4);
  auto put_u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  put_u32(kCheckpointVersion);
  put_u32(static_cast<std::uint32_t>(g.nx));
  put_u32(static_cast<std::uint32_t>(g.ny));
  put_u32(static_cast<std::uint32_t>(snaps.size()));
  put_u32(2u);
  for (const auto& s : snaps) {
    if (!s.grid->same_as(g))
      throw Error(ErrorCode::grid_mismatch, "checkpoint: snapshots on different grids");
    os.write(reinterpret_cast<const char*>(s.data.data()),
             static_cast<std::streamsize>(sizeof(double) * s.data.size()));
  }
  if (!os) throw Error(ErrorCode::io_failed, "short write: " + path);
}

inline std::vector<VelocityField> read_checkpoint(const std::string& path, const Grid& g) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::io_failed, "cannot open for read: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "OLDN", 4) != 0)
    throw Error(ErrorCode::checkpoint_bad_magic, "invalid checkpoint magic: " + path);
  auto get_u32 = [&]() {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw Error(ErrorCode::checkpoint_truncated, "truncated checkpoint: " + path);
    return v;
  };
  const std::uint32_t version = get_u32();
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::checkpoint_bad_version,
                "unsupported version " + std::to_string(version) + ": " + path);
  const std::uint32_t nx = get_u32(), ny = get_u32(), nsnap = get_u32(), ncomp = get_u32();
  if (static_cast<int>(nx) != g.nx || static_cast<int>(ny) != g.ny || ncomp != 2u)
    throw Error(ErrorCode::checkpoint_grid_mismatch, "checkpoint grid mismatch: " + path);

  std::vector<VelocityField> snaps;
  snaps.reserve(nsnap);
  for (std::uint32_t s = 0; s < nsnap; ++s) {
    VelocityField f(g);
    is.read(reinterpret_cast<char*>(f.data.data()),
            static_cast<std::streamsize>(sizeof(double) * f.data.size()));
    if (!is) throw Error(ErrorCode::checkpoint_truncated, "truncated checkpoint: " + path);
    snaps.push_back(std::move(f));
  }
  return snaps;
}

}  // namespace oldnash

#endif
