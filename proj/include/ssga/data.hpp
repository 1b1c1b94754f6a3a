#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ssga/rng.hpp"
#include "ssga/tensor.hpp"

namespace ssga {

enum class FamilyId : std::uint8_t { ellipses, polygons, stripes, blobs };

/// Grayscale procedural image family. Every sample is a pure function of
/// (family, sample seed). Ranges are fractions of the image side.
struct ProceduralFamily {
    FamilyId id = FamilyId::ellipses;
    std::string name = "ellipses";  // used for directory names; variants get their own
    std::size_t resolution = 32;
    std::size_t sides = 3;  // polygons only
    float center_lo = 0.35f, center_hi = 0.65f;
    float scale_lo = 0.12f, scale_hi = 0.28f;  // semi-axis / circumradius / bump width
    float background = -1.0f;
    float fg_lo = 0.4f, fg_hi = 1.0f;
    std::size_t supersample = 4;

    std::string id_string() const;
    void validate() const;
};

/// "ellipses", "polygons-<k>", "stripes" or "blobs" with default parameters.
ProceduralFamily family_from_name(const std::string& name, std::size_t resolution = 32);

/// (1, R, R) image, values in [-1, 1], stored as f32.
Tensor render(const ProceduralFamily& family, std::uint64_t sample_seed);
/// (B, 1, R, R) stack of renders.
Tensor render_batch(const ProceduralFamily& family, const std::vector<std::uint64_t>& seeds);

struct FewShotDataset {
    ProceduralFamily family;
    std::vector<std::uint64_t> train_seeds;
    std::vector<std::uint64_t> val_seeds;

    std::size_t shots() const { return train_seeds.size(); }
    Tensor train_images() const { return render_batch(family, train_seeds); }
    Tensor val_images() const { return render_batch(family, val_seeds); }
};

FewShotDataset make_fewshot(const ProceduralFamily& family, std::size_t k, std::uint64_t seed,
                            std::size_t val_size = 500);

/// Infinite source sampler: draws sample seeds from `rng`.
Tensor sample_source_batch(const ProceduralFamily& family, RngStream& rng, std::size_t batch);

struct DomainPair {
    ProceduralFamily source;
    ProceduralFamily target;
};

/// close: ellipses -> ellipses on a lighter background with dim foreground.
/// dissimilar: ellipses -> triangles.
DomainPair dissimilarity_pair(const std::string& preset, std::size_t resolution = 32);

// PGM (P5, maxval 255). Pixels map [-1, 1] -> [0, 255] with round-half-even.
std::uint8_t quantize_pixel(float v);
std::string encode_pgm(const Tensor& image);  // (R, R), (1, R, R) or (1, 1, R, R)
Tensor decode_pgm(const std::string& bytes);  // (1, R, R) f32
/// Images (B, 1, R, R) laid out row-major in a grid with black gutters.
std::string encode_pgm_grid(const Tensor& images, std::size_t rows, std::size_t cols, std::size_t gutter = 2);

/// Writes data/<family name>/<seed>.pgm for every train and validation seed.
void export_dataset(const FewShotDataset& data, const std::filesystem::path& root);

// Files
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace ssga
