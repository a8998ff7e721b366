#pragma once

#include "erw/backbone.hpp"
#include "erw/codec.hpp"
#include "erw/teacher.hpp"
#include "erw/types.hpp"

#include <string>
#include <utility>

namespace erw {

// Little-endian binary checkpoints. Layout: 4-byte magic, u32 version, then
// shape-prefixed f64 arrays (u32 rank, u64 dims, row-major data).
//   "ERWT": codec encode map, decode map, mean, then the 6 teacher arrays.
//   "ERWM": 9 u64 config fields (depth, width, erw_depth, erw_start,
//           proj_tap, d_lat, d_rep, time_dim, head_width), then parameters.

void save_teacher_codec(const std::string& path, const LatentCodec& codec,
                        const TeacherEncoder& teacher);
std::pair<LatentCodec, TeacherEncoder> load_teacher_codec(const std::string& path);

void save_backbone(const std::string& path, const Backbone& model);
Backbone load_backbone(const std::string& path);

std::uint64_t file_hash(const std::string& path);

}  // namespace erw
