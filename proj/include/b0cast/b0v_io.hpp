#pragma once

#include <filesystem>

#include "b0cast/volume.hpp"

namespace b0cast {

// "B0V v1" container: one line of UTF-8 JSON
//   {"magic":"B0V1","dims":[...],"spacing_mm":[...],"origin_mm":[...],
//    "units":"Hz","dtype":"f32le","echoes_ms":[...]}   (echoes_ms optional)
// terminated by '\n', followed by raw little-endian IEEE-754 f32 in x-fastest
// order. Complex volumes store interleaved (re,im) pairs per echo, echoes
// concatenated. Round trips are bit-exact for all finite f32 payloads.

void write_volume(const Volume3D& vol, const std::filesystem::path& path);
Volume3D read_volume(const std::filesystem::path& path);

void write_complex_volume(const ComplexVolume& vol, const std::filesystem::path& path);
ComplexVolume read_complex_volume(const std::filesystem::path& path);

} // namespace b0cast
