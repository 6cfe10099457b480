#pragma once

#include <spinefuse/mesh.hpp>

#include <filesystem>

namespace spinefuse {

// ASCII OBJ: only `v` and `f` records are interpreted (1-based indices,
// polygons fan-triangulated); every other record is skipped.
TriMesh read_obj(const std::filesystem::path& path);
void write_obj(const std::filesystem::path& path, const TriMesh& mesh);

// Binary little-endian PLY. Vertex x/y/z may be float32 or float64; face
// lists are read with any integer count/index type.
TriMesh read_ply(const std::filesystem::path& path);
void write_ply(const std::filesystem::path& path, const TriMesh& mesh);

/// Dispatch on extension (.obj / .ply).
TriMesh read_mesh(const std::filesystem::path& path);
void write_mesh(const std::filesystem::path& path, const TriMesh& mesh);

}  // namespace spinefuse
