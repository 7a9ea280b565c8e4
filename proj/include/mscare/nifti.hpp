#pragma once

#include <filesystem>

#include "mscare/volume.hpp"

namespace mscare {

/// Read a NIfTI-1 volume (.nii or .nii.gz, either byte order). Geometry comes
/// from the header: pixdim gives the spacing, sform (else qform) gives origin
/// and direction. Array axis 0 is the NIfTI k axis, axis 2 the i axis.
Volume load_volume(const std::filesystem::path& path, VolumeKind kind = VolumeKind::Intensity);

/// Write a NIfTI-1 volume, gzip-compressed when the name ends in ".gz".
/// Intensities are stored as float32, labelmaps as uint8 (int16 if a code exceeds 255).
void save_volume(const Volume& v, const std::filesystem::path& path);

/// True for names ending in ".nii" or ".nii.gz".
bool is_nifti_path(const std::filesystem::path& path);

}  // namespace mscare
