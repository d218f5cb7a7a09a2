// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pickdraw/io.hpp"
#include "pickdraw/tensor.hpp"

#include <json.hpp>

// Synthetic image-caption corpus: 32x32 RGB scenes of one textured, colored
// shape over a textured background, captioned by a tiny fixed grammar. The
// palette is tuned so every subject color keeps a luminance gap >= 0.2
// against every background mean, which keeps all shape/background cells of
// the stratified dataset valid.

namespace pickdraw::data {

constexpr int kImageSize = 32;
constexpr int kMaxCaptionLen = 8;

enum class Shape { circle, square, triangle, star };
enum class Texture { solid, striped, dotted };
enum class Background { plain, grass, water, sky, checker };

constexpr int kNumShapes = 4;
constexpr int kNumTextures = 3;
constexpr int kNumColors = 6;
constexpr int kNumBackgrounds = 5;

struct Rgb {
    double r, g, b;
    double luminance() const { return 0.2126 * r + 0.7152 * g + 0.0722 * b; }
};

inline const std::vector<std::string>& shape_names() {
    static const std::vector<std::string> v{"circle", "square", "triangle", "star"};
    return v;
}
inline const std::vector<std::string>& texture_names() {
    static const std::vector<std::string> v{"solid", "striped", "dotted"};
    return v;
}
inline const std::vector<std::string>& background_names() {
    static const std::vector<std::string> v{"plain", "grass", "water", "sky", "checker"};
    return v;
}
inline const std::vector<std::string>& color_names() {
    static const std::vector<std::string> v{"red", "green", "blue", "yellow", "purple", "orange"};
    return v;
}
inline const std::vector<Rgb>& palette() {
    static const std::vector<Rgb> v{
        {0.80, 0.05, 0.05},  // red
        {0.15, 0.85, 0.25},  // green
        {0.10, 0.20, 0.90},  // blue
        {0.95, 0.90, 0.20},  // yellow
        {0.45, 0.10, 0.65},  // purple
        {1.00, 0.62, 0.00},  // orange
    };
    return v;
}

/// Mean color of each background, used for the contrast rule.
inline Rgb background_mean(Background bg) {
    switch (bg) {
        case Background::plain: return {0.435, 0.435, 0.435};
        case Background::grass: return {0.18, 0.55, 0.05};
        case Background::water: return {0.21, 0.45, 0.95};
        case Background::sky: return {0.245, 0.475, 0.865};  // midpoint of the gradient
        case Background::checker: return {0.435, 0.435, 0.435};
    }
    throw std::logic_error("background_mean: bad enum");
}

struct SceneSpec {
    Shape shape = Shape::circle;
    Texture texture = Texture::solid;
    int color = 0;  // palette index
    Background background = Background::plain;
    int cell = 4;        // 3x3 grid position, row-major
    double scale = 0.5;  // subject diameter as a fraction of the canvas
};

inline double cell_center_x(int cell) { return std::vector<double>{9, 16, 23}[static_cast<size_t>(cell % 3)]; }
inline double cell_center_y(int cell) { return std::vector<double>{9, 16, 23}[static_cast<size_t>(cell / 3)]; }

inline void validate_spec(const SceneSpec& s) {
    if (s.color < 0 || s.color >= kNumColors) throw std::invalid_argument("SceneSpec: bad color index");
    if (s.cell < 0 || s.cell > 8) throw std::invalid_argument("SceneSpec: cell must be in [0,8]");
    if (s.scale < 0.25 || s.scale > 0.6)
        throw std::invalid_argument("SceneSpec: scale must be in [0.25, 0.6]");
    const double r = 0.5 * s.scale * kImageSize;
    const double cx = cell_center_x(s.cell), cy = cell_center_y(s.cell);
    if (cx - r < 0.0 || cx + r > kImageSize || cy - r < 0.0 || cy + r > kImageSize)
        throw std::invalid_argument("SceneSpec: subject extends outside the canvas");
    const double gap = std::abs(palette()[static_cast<size_t>(s.color)].luminance() -
                                background_mean(s.background).luminance());
    if (gap + 1e-9 < 0.2)
        throw std::invalid_argument("SceneSpec: subject/background luminance gap below 0.2 (" +
                                    color_names()[static_cast<size_t>(s.color)] + " on " +
                                    background_names()[static_cast<size_t>(int(s.background))] + ")");
}

// ---------------------------------------------------------------------------
// Vocabulary and captions
// ---------------------------------------------------------------------------

class Vocab {
public:
    static const Vocab& instance() {
        static const Vocab v;
        return v;
    }

    int size() const { return static_cast<int>(words_.size()); }
    const std::string& word(int id) const { return words_.at(static_cast<size_t>(id)); }
    int id(const std::string& w) const {
        for (size_t i = 0; i < words_.size(); ++i)
            if (words_[i] == w) return static_cast<int>(i);
        return -1;
    }
    int pad_id() const { return 0; }
    int sks_id() const { return id("sks"); }
    bool is_subject(int token) const {
        if (token == sks_id()) return true;
        for (const auto& s : shape_names())
            if (token == id(s)) return true;
        return false;
    }

private:
    Vocab() {
        words_ = {"<pad>", "a", "on", "in"};
        auto append = [this](const std::vector<std::string>& v) {
            words_.insert(words_.end(), v.begin(), v.end());
        };
        append(texture_names());
        append(color_names());
        append(shape_names());
        append(background_names());
        words_.push_back("sks");
    }
    std::vector<std::string> words_;
};

struct Caption {
    std::vector<int> tokens;  // kMaxCaptionLen ids, 0-padded
    int subject_index = -1;   // position of the subject noun
    int length = 0;

    static Caption null() {
        Caption c;
        c.tokens.assign(kMaxCaptionLen, 0);
        return c;
    }
};

inline Caption tokenize(const std::string& text) {
    const Vocab& vocab = Vocab::instance();
    Caption cap;
    cap.tokens.assign(kMaxCaptionLen, vocab.pad_id());
    std::istringstream ss(text);
    std::string w;
    int subjects = 0;
    while (ss >> w) {
        const int id = vocab.id(w);
        if (id < 0) throw std::invalid_argument("tokenize: word not in vocabulary: \"" + w + "\"");
        if (cap.length >= kMaxCaptionLen) throw std::invalid_argument("tokenize: caption too long");
        if (vocab.is_subject(id)) {
            ++subjects;
            cap.subject_index = cap.length;
        }
        cap.tokens[static_cast<size_t>(cap.length++)] = id;
    }
    if (subjects != 1)
        throw std::invalid_argument("tokenize: caption needs exactly one subject noun, got " +
                                    std::to_string(subjects));
    return cap;
}

inline std::string detokenize(const Caption& cap) {
    const Vocab& vocab = Vocab::instance();
    std::string out;
    for (int i = 0; i < cap.length; ++i) {
        if (i) out += ' ';
        out += vocab.word(cap.tokens[static_cast<size_t>(i)]);
    }
    return out;
}

struct CaptionStyle {
    bool with_texture = true;
    bool with_color = true;
    bool use_placeholder = false;  // substitute "sks" for the shape noun
};

inline std::string caption_text(const SceneSpec& s, const CaptionStyle& style = {}) {
    const bool in_prep = s.background == Background::water || s.background == Background::sky;
    std::string out = "a";
    if (style.with_texture) out += " " + texture_names()[static_cast<size_t>(int(s.texture))];
    if (style.with_color) out += " " + color_names()[static_cast<size_t>(s.color)];
    out += " " + (style.use_placeholder ? std::string("sks")
                                        : shape_names()[static_cast<size_t>(int(s.shape))]);
    out += in_prep ? " in " : " on ";
    out += background_names()[static_cast<size_t>(int(s.background))];
    return out;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace detail {

inline bool point_in_polygon(double x, double y, const std::vector<double>& vx,
                             const std::vector<double>& vy) {
    bool inside = false;
    const size_t n = vx.size();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        if ((vy[i] > y) != (vy[j] > y) &&
            x < (vx[j] - vx[i]) * (y - vy[i]) / (vy[j] - vy[i]) + vx[i])
            inside = !inside;
    }
    return inside;
}

inline bool inside_subject(const SceneSpec& s, double cx, double cy, double x, double y) {
    const double r = 0.5 * s.scale * kImageSize;
    const double dx = x - cx, dy = y - cy;
    switch (s.shape) {
        case Shape::circle:
            return dx * dx + dy * dy <= r * r;
        case Shape::square:
            return std::max(std::abs(dx), std::abs(dy)) <= 0.8 * r;
        case Shape::triangle: {
            std::vector<double> vx(3), vy(3);
            for (int k = 0; k < 3; ++k) {
                const double a = -M_PI / 2 + k * 2.0 * M_PI / 3;
                vx[static_cast<size_t>(k)] = r * std::cos(a);
                vy[static_cast<size_t>(k)] = r * std::sin(a);
            }
            return point_in_polygon(dx, dy, vx, vy);
        }
        case Shape::star: {
            std::vector<double> vx(10), vy(10);
            for (int k = 0; k < 10; ++k) {
                const double rr = k % 2 == 0 ? r : 0.5 * r;
                const double a = -M_PI / 2 + k * M_PI / 5;
                vx[static_cast<size_t>(k)] = rr * std::cos(a);
                vy[static_cast<size_t>(k)] = rr * std::sin(a);
            }
            return point_in_polygon(dx, dy, vx, vy);
        }
    }
    return false;
}

struct RenderPhases {
    double subject = 0.0, bg_a = 0.0, bg_b = 0.0;
};

inline Rgb subject_color(const SceneSpec& s, double x, double y, const RenderPhases& ph) {
    Rgb c = palette()[static_cast<size_t>(s.color)];
    switch (s.texture) {
        case Texture::solid:
            return c;
        case Texture::striped: {
            const double v = std::fmod(x + y + ph.subject, 5.0);
            const double f = v < 2.5 ? 1.3 : 0.6;
            return {std::min(1.0, c.r * f), std::min(1.0, c.g * f), std::min(1.0, c.b * f)};
        }
        case Texture::dotted: {
            const double dx = std::fmod(x + ph.subject, 4.0) - 2.0;
            const double dy = std::fmod(y + ph.subject, 4.0) - 2.0;
            if (dx * dx + dy * dy <= 1.3 * 1.3)
                return {0.45 * c.r + 0.55, 0.45 * c.g + 0.55, 0.45 * c.b + 0.55};
            return {c.r * 0.9, c.g * 0.9, c.b * 0.9};
        }
    }
    return c;
}

inline Rgb background_color(Background bg, double x, double y, const RenderPhases& ph) {
    switch (bg) {
        case Background::plain:
            return {0.435, 0.435, 0.435};
        case Background::grass: {
            const Rgb base{0.18, 0.55, 0.05};
            const double v = std::fmod(x + 2.0 * std::floor(y / 3.0) + ph.bg_a, 3.0);
            const double f = v < 1.5 ? 1.15 : 0.88;
            return {base.r * f, base.g * f, std::min(1.0, base.b * f)};
        }
        case Background::water: {
            const Rgb base{0.21, 0.45, 0.95};
            const double f =
                1.0 + 0.10 * std::sin(2.0 * M_PI * (y + 2.0 * std::sin(2.0 * M_PI * x / 16.0) + ph.bg_a) / 5.0);
            return {base.r * f, base.g * f, std::min(1.0, base.b * f)};
        }
        case Background::sky: {
            const double t = y / kImageSize;
            return {0.30 + (0.19 - 0.30) * t, 0.55 + (0.40 - 0.55) * t, 0.95 + (0.78 - 0.95) * t};
        }
        case Background::checker: {
            const int ix = static_cast<int>(std::floor((x + ph.bg_b) / 4.0));
            const int iy = static_cast<int>(std::floor((y + ph.bg_b) / 4.0));
            const double g = (ix + iy) % 2 == 0 ? 0.51 : 0.36;
            return {g, g, g};
        }
    }
    throw std::logic_error("background_color: bad enum");
}

inline uint64_t spec_key(const SceneSpec& s) {
    uint64_t k = static_cast<uint64_t>(int(s.shape));
    k = k * 131 + static_cast<uint64_t>(int(s.texture));
    k = k * 131 + static_cast<uint64_t>(s.color);
    k = k * 131 + static_cast<uint64_t>(int(s.background));
    k = k * 131 + static_cast<uint64_t>(s.cell);
    k = k * 131 + static_cast<uint64_t>(std::llround(s.scale * 1024.0));
    return k;
}

}  // namespace detail

struct Sample {
    Tensor image;  // [32, 32, 3] in [0,1]
    Tensor mask;   // [32, 32] binary, evaluation only
    Caption caption;
    std::string text;
    SceneSpec spec;
    uint64_t seed = 0;
};

/// Deterministic antialiased render of one scene. The seed drives subpixel
/// jitter of the subject center and the texture phases, nothing else.
inline Sample generate_scene(const SceneSpec& spec, uint64_t seed,
                             const CaptionStyle& style = {}) {
    validate_spec(spec);
    Rng rng = Rng(seed).derive(detail::spec_key(spec));

    const double r = 0.5 * spec.scale * kImageSize;
    double cx = cell_center_x(spec.cell), cy = cell_center_y(spec.cell);
    const double jx = std::min({1.0, cx - r, kImageSize - cx - r});
    const double jy = std::min({1.0, cy - r, kImageSize - cy - r});
    cx += rng.uniform(-jx, jx);
    cy += rng.uniform(-jy, jy);

    detail::RenderPhases ph;
    ph.subject = rng.uniform(0.0, 4.0);
    ph.bg_a = rng.uniform(0.0, 4.0);
    ph.bg_b = static_cast<double>(rng.uniform_int(0, 3));

    Sample out;
    out.spec = spec;
    out.seed = seed;
    out.text = caption_text(spec, style);
    out.caption = tokenize(out.text);
    out.image = Tensor({kImageSize, kImageSize, 3});
    out.mask = Tensor({kImageSize, kImageSize});

    constexpr int S = 4;  // supersampling per axis
    for (int py = 0; py < kImageSize; ++py)
        for (int px = 0; px < kImageSize; ++px) {
            double acc[3] = {0, 0, 0};
            int hits = 0;
            for (int sy = 0; sy < S; ++sy)
                for (int sx = 0; sx < S; ++sx) {
                    const double x = px + (sx + 0.5) / S;
                    const double y = py + (sy + 0.5) / S;
                    Rgb c;
                    if (detail::inside_subject(spec, cx, cy, x, y)) {
                        c = detail::subject_color(spec, x, y, ph);
                        ++hits;
                    } else {
                        c = detail::background_color(spec.background, x, y, ph);
                    }
                    acc[0] += c.r;
                    acc[1] += c.g;
                    acc[2] += c.b;
                }
            for (int ch = 0; ch < 3; ++ch) out.image.at(py, px, ch) = acc[ch] / (S * S);
            out.mask.at(py, px) = hits * 2 >= S * S ? 1.0 : 0.0;
        }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset build / save / load
// ---------------------------------------------------------------------------

struct Dataset {
    std::vector<Sample> samples;
};

/// Stratified dataset: cycles through all shape x background cells so every
/// shape lands within count/4 +- 1 records; texture, color, position, scale
/// and caption verbosity are sampled per record.
inline Dataset build_dataset(int count, uint64_t seed) {
    if (count < 1) throw std::invalid_argument("build_dataset: count must be >= 1");
    Dataset ds;
    ds.samples.reserve(static_cast<size_t>(count));
    Rng rng = Rng(seed).derive(0x5d5e5e);
    for (int i = 0; i < count; ++i) {
        SceneSpec spec;
        spec.shape = static_cast<Shape>(i % kNumShapes);
        spec.background = static_cast<Background>((i / kNumShapes) % kNumBackgrounds);
        spec.texture = static_cast<Texture>(rng.uniform_int(0, kNumTextures - 1));
        spec.color = rng.uniform_int(0, kNumColors - 1);
        spec.cell = rng.uniform_int(0, 8);
        spec.scale = rng.uniform(0.25, 0.5);
        CaptionStyle style;
        const double u = rng.uniform();
        if (u < 0.15) {
            style.with_texture = false;
            style.with_color = false;
        } else if (u < 0.40) {
            style.with_texture = false;
        } else if (u < 0.50) {
            style.with_color = false;
        }
        ds.samples.push_back(generate_scene(spec, rng.derive(static_cast<uint64_t>(i)).seed(), style));
    }
    return ds;
}

inline std::string sample_file_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%05d.bin", i);
    return buf;
}

inline void save_dataset(const Dataset& ds, const std::string& dir) {
    io::ensure_dir(dir);
    io::ensure_dir(dir + "/data");
    io::ensure_dir(dir + "/previews");
    nlohmann::json index;
    index["image_size"] = kImageSize;
    index["vocab"] = nlohmann::json::array();
    for (int i = 0; i < Vocab::instance().size(); ++i) index["vocab"].push_back(Vocab::instance().word(i));
    index["count"] = ds.samples.size();
    index["records"] = nlohmann::json::array();
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& s = ds.samples[i];
        io::BinWriter w;
        w.str("PKDS");
        w.u32(1);  // version
        w.tensor_f32(s.image);
        w.tensor_u8(s.mask);
        w.save(dir + "/data/" + sample_file_name(static_cast<int>(i)));
        char png[32];
        std::snprintf(png, sizeof(png), "sample_%05d.png", static_cast<int>(i));
        io::save_png(dir + "/previews/" + png, s.image, 4);

        nlohmann::json rec;
        rec["id"] = i;
        rec["file"] = std::string("data/") + sample_file_name(static_cast<int>(i));
        rec["caption"] = s.text;
        rec["tokens"] = s.caption.tokens;
        rec["subject_index"] = s.caption.subject_index;
        rec["shape"] = shape_names()[static_cast<size_t>(int(s.spec.shape))];
        rec["texture"] = texture_names()[static_cast<size_t>(int(s.spec.texture))];
        rec["color"] = color_names()[static_cast<size_t>(s.spec.color)];
        rec["background"] = background_names()[static_cast<size_t>(int(s.spec.background))];
        rec["cell"] = s.spec.cell;
        rec["scale"] = s.spec.scale;
        rec["seed"] = s.seed;
        index["records"].push_back(rec);
    }
    io::write_text(dir + "/index.json", index.dump(1));
}

inline int index_of(const std::vector<std::string>& names, const std::string& v, const char* what) {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == v) return static_cast<int>(i);
    throw std::runtime_error(std::string("load_dataset: unknown ") + what + ": " + v);
}

inline Dataset load_dataset(const std::string& dir) {
    const nlohmann::json index = nlohmann::json::parse(io::read_text(dir + "/index.json"));
    if (index.at("image_size").get<int>() != kImageSize)
        throw std::runtime_error("load_dataset: unexpected image size");
    Dataset ds;
    for (const auto& rec : index.at("records")) {
        Sample s;
        io::BinReader r = io::BinReader::open(dir + "/" + rec.at("file").get<std::string>());
        if (r.str() != "PKDS") throw std::runtime_error("load_dataset: bad sample magic");
        if (r.u32() != 1) throw std::runtime_error("load_dataset: unsupported sample version");
        s.image = r.tensor_f32();
        s.mask = r.tensor_u8();
        s.text = rec.at("caption").get<std::string>();
        s.caption = tokenize(s.text);
        s.spec.shape = static_cast<Shape>(index_of(shape_names(), rec.at("shape"), "shape"));
        s.spec.texture = static_cast<Texture>(index_of(texture_names(), rec.at("texture"), "texture"));
        s.spec.color = index_of(color_names(), rec.at("color"), "color");
        s.spec.background =
            static_cast<Background>(index_of(background_names(), rec.at("background"), "background"));
        s.spec.cell = rec.at("cell").get<int>();
        s.spec.scale = rec.at("scale").get<double>();
        s.seed = rec.at("seed").get<uint64_t>();
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace pickdraw::data
