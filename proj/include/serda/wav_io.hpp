#pragma once

#include <filesystem>
#include <optional>

#include "serda/waveform.hpp"

namespace serda::wav {

enum class Encoding { Pcm16, Float32 };

// Reads a mono WAV file, 16-bit PCM (scaled by 1/32768) or 32-bit IEEE float.
// If `expected_rate` is set, a different rate is a FormatError naming the field.
Waveform load(const std::filesystem::path& path, std::optional<int> expected_rate = std::nullopt);

// PCM16 output clamps to [-1, 1 - 2^-15] and rounds to nearest.
void save(const std::filesystem::path& path, const Waveform& w, Encoding encoding = Encoding::Float32);

}  // namespace serda::wav
