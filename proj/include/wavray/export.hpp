#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wavray/data.hpp"
#include "wavray/ray.hpp"

namespace wavray {

/// Min-max scaling to [0,255]; a constant or empty-range map becomes mid-gray 128.
/// Non-finite values are rejected.
template <typename T>
Image scale_to_gray(std::span<const T> values, std::size_t height, std::size_t width);

template <typename T>
void export_map(std::span<const T> values, std::size_t height, std::size_t width,
                const std::filesystem::path& path);

/// layer<L>_combined.pgm plus layer<L>_origin<K>.pgm for every origin.
/// Returns the number of files written.
template <typename T>
std::size_t export_attenuation(const AttenuationMap<T>& map, std::size_t layer,
                               const std::filesystem::path& out_dir);

/// One CSV row per origin per epoch: epoch,origin_index,x,y. Origins of
/// successive fields are numbered consecutively.
struct OriginRow {
  std::size_t epoch = 0;
  std::size_t index = 0;
  double x = 0.0;
  double y = 0.0;
};

template <typename T>
std::vector<OriginRow> origin_rows(std::size_t epoch, const std::vector<const RayField<T>*>& fields);

std::string origin_csv_header();
std::string origin_csv_lines(const std::vector<OriginRow>& rows);

}  // namespace wavray
