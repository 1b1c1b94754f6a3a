#include "ssga/data.hpp"

#include <unistd.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "ssga/error.hpp"

namespace ssga {

namespace fs = std::filesystem;

std::string ProceduralFamily::id_string() const {
    switch (id) {
        case FamilyId::ellipses: return "ellipses";
        case FamilyId::polygons: return "polygons-" + std::to_string(sides);
        case FamilyId::stripes: return "stripes";
        case FamilyId::blobs: return "blobs";
    }
    return "?";
}

void ProceduralFamily::validate() const {
    if (resolution < 4) throw config_error("data: resolution must be at least 4");
    if (id == FamilyId::polygons && sides < 3) throw config_error("data: polygons need at least 3 sides");
    auto in_unit = [](float v) { return v >= -1.0f && v <= 1.0f; };
    if (!in_unit(background) || !in_unit(fg_lo) || !in_unit(fg_hi) || fg_lo > fg_hi)
        throw config_error("data: intensities must lie in [-1, 1] with fg_lo <= fg_hi");
    if (!(center_lo <= center_hi && scale_lo <= scale_hi && scale_lo > 0.0f))
        throw config_error("data: bad position/scale ranges");
    if (supersample == 0) throw config_error("data: supersample must be positive");
    if (name.empty() || name.find('/') != std::string::npos) throw config_error("data: bad family name '" + name + "'");
}

ProceduralFamily family_from_name(const std::string& name, std::size_t resolution) {
    ProceduralFamily f;
    f.resolution = resolution;
    f.name = name;
    if (name == "ellipses") {
        f.id = FamilyId::ellipses;
    } else if (name.rfind("polygons-", 0) == 0) {
        f.id = FamilyId::polygons;
        const std::string k = name.substr(9);
        if (k.empty() || k.find_first_not_of("0123456789") != std::string::npos)
            throw config_error("data: bad polygon family '" + name + "'");
        f.sides = std::stoul(k);
        f.scale_lo = 0.16f;
        f.scale_hi = 0.3f;
    } else if (name == "stripes") {
        f.id = FamilyId::stripes;
    } else if (name == "blobs") {
        f.id = FamilyId::blobs;
        f.scale_lo = 0.06f;
        f.scale_hi = 0.14f;
    } else {
        throw config_error("data: unknown family '" + name + "'");
    }
    f.validate();
    return f;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

struct Point {
    float x, y;
};

// Coverage in [0,1] of one pixel, sampled on an s x s grid.
template <class Inside>
float coverage(std::size_t px, std::size_t py, std::size_t s, Inside inside) {
    int hits = 0;
    const float step = 1.0f / static_cast<float>(s);
    for (std::size_t j = 0; j < s; ++j)
        for (std::size_t i = 0; i < s; ++i) {
            const float x = static_cast<float>(px) + (static_cast<float>(i) + 0.5f) * step;
            const float y = static_cast<float>(py) + (static_cast<float>(j) + 0.5f) * step;
            hits += inside(x, y) ? 1 : 0;
        }
    return static_cast<float>(hits) / static_cast<float>(s * s);
}

template <class Value>
float average(std::size_t px, std::size_t py, std::size_t s, Value value) {
    float acc = 0.0f;
    const float step = 1.0f / static_cast<float>(s);
    for (std::size_t j = 0; j < s; ++j)
        for (std::size_t i = 0; i < s; ++i)
            acc += value(static_cast<float>(px) + (static_cast<float>(i) + 0.5f) * step,
                         static_cast<float>(py) + (static_cast<float>(j) + 0.5f) * step);
    return acc / static_cast<float>(s * s);
}

float draw(RngStream& rng, float lo, float hi) { return static_cast<float>(rng.uniform(lo, hi)); }

}  // namespace

Tensor render(const ProceduralFamily& f, std::uint64_t sample_seed) {
    f.validate();
    RngStream rng(sample_seed, "render/" + f.id_string());
    const auto R = static_cast<float>(f.resolution);
    const std::size_t n = f.resolution;
    const std::size_t s = f.supersample;
    std::vector<float> cover(n * n, 0.0f);

    switch (f.id) {
        case FamilyId::ellipses: {
            const float cx = draw(rng, f.center_lo, f.center_hi) * R;
            const float cy = draw(rng, f.center_lo, f.center_hi) * R;
            const float a = draw(rng, f.scale_lo, f.scale_hi) * R;
            const float b = draw(rng, f.scale_lo, f.scale_hi) * R;
            const float th = draw(rng, 0.0f, std::numbers::pi_v<float>);
            const float c = std::cos(th), sn = std::sin(th);
            auto inside = [&](float x, float y) {
                const float u = ((x - cx) * c + (y - cy) * sn) / a;
                const float v = (-(x - cx) * sn + (y - cy) * c) / b;
                return u * u + v * v <= 1.0f;
            };
            for (std::size_t y = 0; y < n; ++y)
                for (std::size_t x = 0; x < n; ++x) cover[y * n + x] = coverage(x, y, s, inside);
            break;
        }
        case FamilyId::polygons: {
            const float cx = draw(rng, f.center_lo, f.center_hi) * R;
            const float cy = draw(rng, f.center_lo, f.center_hi) * R;
            const float r = draw(rng, f.scale_lo, f.scale_hi) * R;
            const float th = draw(rng, 0.0f, 2.0f * std::numbers::pi_v<float>);
            std::vector<Point> v(f.sides);
            for (std::size_t i = 0; i < f.sides; ++i) {
                const float a = th + 2.0f * std::numbers::pi_v<float> * static_cast<float>(i) /
                                         static_cast<float>(f.sides);
                v[i] = {cx + r * std::cos(a), cy + r * std::sin(a)};
            }
            // counter-clockwise vertices: inside iff left of every edge
            auto inside = [&](float x, float y) {
                for (std::size_t i = 0; i < v.size(); ++i) {
                    const Point& p = v[i];
                    const Point& q = v[(i + 1) % v.size()];
                    if ((q.x - p.x) * (y - p.y) - (q.y - p.y) * (x - p.x) < 0.0f) return false;
                }
                return true;
            };
            for (std::size_t y = 0; y < n; ++y)
                for (std::size_t x = 0; x < n; ++x) cover[y * n + x] = coverage(x, y, s, inside);
            break;
        }
        case FamilyId::stripes: {
            const float freq = draw(rng, 1.5f, 4.0f);
            const float th = draw(rng, 0.0f, std::numbers::pi_v<float>);
            const float phase = draw(rng, 0.0f, 2.0f * std::numbers::pi_v<float>);
            const float kx = 2.0f * std::numbers::pi_v<float> * freq * std::cos(th) / R;
            const float ky = 2.0f * std::numbers::pi_v<float> * freq * std::sin(th) / R;
            auto value = [&](float x, float y) { return 0.5f + 0.5f * std::sin(kx * x + ky * y + phase); };
            for (std::size_t y = 0; y < n; ++y)
                for (std::size_t x = 0; x < n; ++x) cover[y * n + x] = average(x, y, s, value);
            break;
        }
        case FamilyId::blobs: {
            std::array<Point, 3> c{};
            std::array<float, 3> sigma{};
            for (std::size_t i = 0; i < 3; ++i) {
                c[i] = {draw(rng, f.center_lo - 0.1f, f.center_hi + 0.1f) * R,
                        draw(rng, f.center_lo - 0.1f, f.center_hi + 0.1f) * R};
                sigma[i] = draw(rng, f.scale_lo, f.scale_hi) * R;
            }
            auto value = [&](float x, float y) {
                float acc = 0.0f;
                for (std::size_t i = 0; i < 3; ++i) {
                    const float dx = x - c[i].x, dy = y - c[i].y;
                    acc += std::exp(-(dx * dx + dy * dy) / (2.0f * sigma[i] * sigma[i]));
                }
                return std::min(acc, 1.0f);
            };
            for (std::size_t y = 0; y < n; ++y)
                for (std::size_t x = 0; x < n; ++x) cover[y * n + x] = average(x, y, s, value);
            break;
        }
    }

    const float fg = draw(rng, f.fg_lo, f.fg_hi);
    Tensor img({1, n, n}, DType::f32);
    for (std::size_t i = 0; i < n * n; ++i) {
        const float v = f.background + (fg - f.background) * cover[i];
        img[i] = std::clamp(v, -1.0f, 1.0f);
    }
    return img;
}

Tensor render_batch(const ProceduralFamily& family, const std::vector<std::uint64_t>& seeds) {
    const std::size_t n = family.resolution;
    Tensor out({seeds.size(), 1, n, n}, DType::f32);
    for (std::size_t b = 0; b < seeds.size(); ++b) {
        const Tensor img = render(family, seeds[b]);
        std::copy(img.data().begin(), img.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * n * n));
    }
    return out;
}

Tensor sample_source_batch(const ProceduralFamily& family, RngStream& rng, std::size_t batch) {
    std::vector<std::uint64_t> seeds(batch);
    for (auto& s : seeds) s = rng.next_u64();
    return render_batch(family, seeds);
}

FewShotDataset make_fewshot(const ProceduralFamily& family, std::size_t k, std::uint64_t seed, std::size_t val_size) {
    if (k == 0) throw config_error("data: few-shot k must be at least 1");
    family.validate();
    FewShotDataset d;
    d.family = family;
    RngStream rng(seed, "fewshot/" + family.name);
    std::set<std::uint64_t> used;
    while (d.train_seeds.size() < k) {
        const auto s = rng.next_u64();
        if (used.insert(s).second) d.train_seeds.push_back(s);
    }
    RngStream val = rng.fork("validation");
    while (d.val_seeds.size() < val_size) {
        const auto s = val.next_u64();
        if (used.insert(s).second) d.val_seeds.push_back(s);
    }
    return d;
}

DomainPair dissimilarity_pair(const std::string& preset, std::size_t resolution) {
    DomainPair p{family_from_name("ellipses", resolution), {}};
    if (preset == "close") {
        p.target = p.source;
        p.target.name = "ellipses-faint";
        p.target.background = -0.5f;
        p.target.fg_lo = -0.1f;
        p.target.fg_hi = 0.4f;
    } else if (preset == "dissimilar") {
        p.target = family_from_name("polygons-3", resolution);
    } else {
        throw config_error("data: unknown preset '" + preset + "' (expected close or dissimilar)");
    }
    return p;
}

// ---------------------------------------------------------------------------
// PGM

std::uint8_t quantize_pixel(float v) {
    const float t = (std::clamp(v, -1.0f, 1.0f) + 1.0f) * 127.5f;
    return static_cast<std::uint8_t>(std::nearbyint(t));  // default rounding: half to even
}

namespace {

std::string pgm_header(std::size_t w, std::size_t h) {
    return "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
}

}  // namespace

std::string encode_pgm(const Tensor& image) {
    const auto& s = image.shape();
    if (s.size() < 2 || s[s.size() - 1] != s[s.size() - 2] || image.size() != s.back() * s.back())
        throw config_error("pgm: expected a single square image, got " + shape_str(s));
    const std::size_t n = s.back();
    std::string out = pgm_header(n, n);
    for (double v : image.data()) out.push_back(static_cast<char>(quantize_pixel(static_cast<float>(v))));
    return out;
}

Tensor decode_pgm(const std::string& bytes) {
    std::istringstream in(bytes);
    std::string magic;
    std::size_t w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (!in || magic != "P5" || maxval != 255 || w == 0 || w != h) throw io_error("pgm: unsupported header");
    in.get();
    const auto offset = static_cast<std::size_t>(in.tellg());
    if (bytes.size() - offset != w * h) throw io_error("pgm: truncated pixel data");
    Tensor img({1, h, w}, DType::f32);
    for (std::size_t i = 0; i < w * h; ++i)
        img[i] = static_cast<float>(static_cast<std::uint8_t>(bytes[offset + i])) / 127.5f - 1.0f;
    return img;
}

std::string encode_pgm_grid(const Tensor& images, std::size_t rows, std::size_t cols, std::size_t gutter) {
    const auto& s = images.shape();
    if (s.size() != 4 || s[1] != 1 || s[2] != s[3] || s[0] != rows * cols)
        throw config_error("pgm grid: expected (" + std::to_string(rows * cols) + ", 1, R, R), got " + shape_str(s));
    const std::size_t n = s[2];
    const std::size_t W = cols * n + (cols - 1) * gutter;
    const std::size_t H = rows * n + (rows - 1) * gutter;
    std::string pix(W * H, '\0');
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t base = (r * cols + c) * n * n;
            for (std::size_t y = 0; y < n; ++y)
                for (std::size_t x = 0; x < n; ++x)
                    pix[(r * (n + gutter) + y) * W + c * (n + gutter) + x] =
                        static_cast<char>(quantize_pixel(static_cast<float>(images[base + y * n + x])));
        }
    return pgm_header(W, H) + pix;
}

void export_dataset(const FewShotDataset& data, const fs::path& root) {
    const fs::path dir = root / data.family.name;
    for (const auto* seeds : {&data.train_seeds, &data.val_seeds})
        for (auto s : *seeds) write_file_atomic(dir / (std::to_string(s) + ".pgm"), encode_pgm(render(data.family, s)));
}

// ---------------------------------------------------------------------------
// Files

void write_file_atomic(const fs::path& path, const std::string& bytes) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    if (ec) throw io_error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out.flush()) throw io_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw io_error("cannot rename onto " + path.string());
    }
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace ssga
