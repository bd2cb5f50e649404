#pragma once

#include <filesystem>
#include <string>

#include "sceneflow/types.hpp"

namespace sceneflow {

enum class CloudFormat { xyz_text, ply_ascii, raw_f32le };

CloudFormat cloud_format_from_name(const std::string& name);
const char* cloud_format_name(CloudFormat format);

PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format);
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format);

// Flow files are plain text, one "dx dy dz" per line, '#' comments allowed.
// Values are written with shortest round-trip formatting, so save followed by
// load reproduces every double bit-exactly.
FlowField load_flow(const std::filesystem::path& path);
void save_flow(const FlowField& flow, const std::filesystem::path& path);

}  // namespace sceneflow
