#include "cqa/service/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "cqa/errors.hpp"
#include "cqa/rng.hpp"
#include "cqa/service/formats.hpp"
#include "cqa/service/png_io.hpp"

namespace fs = std::filesystem;

namespace cqa::service {

std::string slice_id(const std::string& subject_id, int index) {
    return subject_id + ":" + std::to_string(index);
}

namespace {

std::string slice_file(int n) { return "slice_" + std::to_string(n) + ".png"; }

GrayPixels mask_pixels(const geom::MaskSlice& m) {
    GrayPixels px{m.rows(), m.cols(), {}};
    px.data.reserve(m.data().size());
    for (auto v : m.data()) px.data.push_back(v ? 255 : 0);
    return px;
}

GrayPixels image_pixels(const Image& img) {
    GrayPixels px{img.rows, img.cols, {}};
    px.data.reserve(img.values.size());
    for (double v : img.values) px.data.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    return px;
}

Image quantize(const Image& img) {
    Image out = img;
    for (auto& v : out.values) v = std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
    return out;
}

geom::MaskSlice mask_from(const GrayPixels& px, const geom::Spacing& s, const std::string& subject, int index) {
    geom::MaskSlice m(px.rows, px.cols, s, subject, index);
    for (int r = 0; r < px.rows; ++r)
        for (int c = 0; c < px.cols; ++c) m.set(r, c, px.data[static_cast<std::size_t>(r) * px.cols + c] != 0);
    return m;
}

std::set<int> slice_indices(const fs::path& dir) {
    std::set<int> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (name.rfind("slice_", 0) != 0 || e.path().extension() != ".png") continue;
        const auto digits = name.substr(6, name.size() - 6 - 4);
        try {
            out.insert(parse_int(digits));
        } catch (const FormatError&) {
            throw FormatError("unexpected slice file name " + (dir / name).string());
        }
    }
    return out;
}

void check_indices(const fs::path& dir, int count) {
    const auto found = slice_indices(dir);
    for (int n : found) {
        if (n < 0 || n >= count)
            throw FormatError("slice indices are not contiguous from 0: " + (dir / slice_file(n)).string() +
                              " lies outside slice_count " + std::to_string(count));
    }
    for (int n = 0; n < count; ++n) {
        if (!found.count(n)) throw FormatError("slice indices are not contiguous from 0: missing " + (dir / slice_file(n)).string());
    }
}

void require_shape(const std::string& what, int rows, int cols, int exp_rows, int exp_cols, const std::string& id) {
    if (rows != exp_rows || cols != exp_cols)
        throw DimensionError("slice " + id + ": " + what + " is " + std::to_string(rows) + "x" + std::to_string(cols) +
                             " but expected " + std::to_string(exp_rows) + "x" + std::to_string(exp_cols));
}

}  // namespace

CaseBundle load_case_bundle(const fs::path& dir) {
    const auto meta_path = dir / "meta.json";
    if (!fs::exists(meta_path)) throw FormatError("missing meta.json in " + dir.string());
    CaseBundle b;
    int count = 0;
    try {
        const auto meta = Json::parse(read_text(meta_path));
        b.subject_id = meta.at("subject_id").get<std::string>();
        const auto sp = meta.at("spacing_mm").get<std::vector<double>>();
        if (sp.size() != 2) throw FormatError("spacing_mm must have two entries");
        b.spacing = {sp[0], sp[1]};
        count = meta.at("slice_count").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(meta_path.string() + ": " + e.what());
    }
    if (!(b.spacing.row_mm > 0) || !(b.spacing.col_mm > 0)) throw FormatError(meta_path.string() + ": spacing must be positive");
    if (count < 0) throw FormatError(meta_path.string() + ": negative slice_count");

    check_indices(dir / "auto", count);
    const bool has_ref = fs::is_directory(dir / "ref");
    const bool has_img = fs::is_directory(dir / "images");
    if (has_ref) check_indices(dir / "ref", count);
    if (has_img) check_indices(dir / "images", count);

    for (int n = 0; n < count; ++n) {
        const auto id = slice_id(b.subject_id, n);
        BundleSlice s;
        s.index = n;
        const auto auto_px = read_png(dir / "auto" / slice_file(n));
        if (has_img) {
            const auto img_px = read_png(dir / "images" / slice_file(n));
            Image img(img_px.rows, img_px.cols);
            for (std::size_t i = 0; i < img_px.data.size(); ++i) img.values[i] = img_px.data[i] / 255.0;
            require_shape("auto mask", auto_px.rows, auto_px.cols, img.rows, img.cols, id);
            s.image = std::move(img);
        }
        s.auto_mask = mask_from(auto_px, b.spacing, b.subject_id, n);
        if (has_ref) {
            const auto ref_px = read_png(dir / "ref" / slice_file(n));
            require_shape("reference mask", ref_px.rows, ref_px.cols, auto_px.rows, auto_px.cols, id);
            s.ref_mask = mask_from(ref_px, b.spacing, b.subject_id, n);
        }
        b.slices.push_back(std::move(s));
    }

    std::map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < b.slices.size(); ++i) by_id[slice_id(b.subject_id, b.slices[i].index)] = i;
    auto lookup = [&](const std::string& id, const fs::path& file) -> BundleSlice& {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw FormatError(file.string() + ": unknown slice " + id);
        return b.slices[it->second];
    };
    if (fs::exists(dir / "labels.csv")) {
        const auto t = read_csv(dir / "labels.csv");
        const auto c_id = t.column("slice_id"), c_l = t.column("label"), c_d = t.column("dsc"),
                   c_s = t.column("sdsc"), c_h = t.column("hd95_mm");
        for (const auto& r : t.rows) {
            auto& s = lookup(r[c_id], dir / "labels.csv");
            s.surrogate_label = parse_int(r[c_l]);
            geom::GeomMetrics m;
            m.dsc = parse_real(r[c_d]);
            m.sdsc = parse_real(r[c_s]);
            m.hd95_mm = parse_real(r[c_h]);
            s.metrics = m;
        }
    }
    if (fs::exists(dir / "raters.csv")) {
        const auto t = read_csv(dir / "raters.csv");
        const auto c_id = t.column("slice_id");
        for (const auto& r : t.rows) {
            auto& s = lookup(r[c_id], dir / "raters.csv");
            s.rater_labels.clear();
            for (std::size_t k = 0; k < r.size(); ++k) {
                if (k != c_id) s.rater_labels.push_back(parse_int(r[k]));
            }
        }
    }
    return b;
}

void write_case_bundle(const fs::path& dir, const CaseBundle& b) {
    fs::create_directories(dir / "auto");
    const bool has_ref = std::any_of(b.slices.begin(), b.slices.end(), [](const BundleSlice& s) { return s.ref_mask.has_value(); });
    const bool has_img = std::any_of(b.slices.begin(), b.slices.end(), [](const BundleSlice& s) { return s.image.has_value(); });
    if (has_ref) fs::create_directories(dir / "ref");
    if (has_img) fs::create_directories(dir / "images");

    Json meta{{"subject_id", b.subject_id},
              {"spacing_mm", {b.spacing.row_mm, b.spacing.col_mm}},
              {"slice_count", b.slices.size()}};
    write_text(dir / "meta.json", meta.dump(2) + "\n");

    CsvTable labels{{"slice_id", "label", "dsc", "sdsc", "hd95_mm"}, {}};
    CsvTable raters{{"slice_id"}, {}};
    std::size_t n_raters = 0;
    for (const auto& s : b.slices) n_raters = std::max(n_raters, s.rater_labels.size());
    for (std::size_t k = 0; k < n_raters; ++k) raters.header.push_back("rater_" + std::to_string(k + 1));

    for (std::size_t i = 0; i < b.slices.size(); ++i) {
        const auto& s = b.slices[i];
        if (s.index != static_cast<int>(i)) throw FormatError("bundle slices must be indexed contiguously from 0");
        write_png(dir / "auto" / slice_file(s.index), mask_pixels(s.auto_mask));
        if (s.ref_mask) write_png(dir / "ref" / slice_file(s.index), mask_pixels(*s.ref_mask));
        if (s.image) write_png(dir / "images" / slice_file(s.index), image_pixels(*s.image));
        const auto id = slice_id(b.subject_id, s.index);
        if (s.surrogate_label && s.metrics) {
            labels.rows.push_back({id, std::to_string(*s.surrogate_label), format_real(s.metrics->dsc),
                                   format_real(s.metrics->sdsc), format_real(s.metrics->hd95_mm)});
        }
        if (n_raters > 0) {
            if (s.rater_labels.size() != n_raters) throw FormatError("slice " + id + " has an incomplete rater panel");
            std::vector<std::string> row{id};
            for (int l : s.rater_labels) row.push_back(std::to_string(l));
            raters.rows.push_back(std::move(row));
        }
    }
    if (!labels.rows.empty()) write_csv(dir / "labels.csv", labels);
    if (n_raters > 0) write_csv(dir / "raters.csv", raters);
}

std::vector<CaseBundle> load_dataset(const fs::path& root) {
    if (fs::exists(root / "meta.json")) return {load_case_bundle(root)};
    if (!fs::is_directory(root)) throw FormatError("dataset directory not found: " + root.string());
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory() && fs::exists(e.path() / "meta.json")) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw FormatError("no case bundles under " + root.string());
    std::vector<CaseBundle> out;
    for (const auto& d : dirs) out.push_back(load_case_bundle(d));
    return out;
}

std::vector<int> simulate_panel(const geom::GeomMetrics& m, const RaterModel& model, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> labels;
    for (int k = 0; k < model.raters; ++k) {
        geom::GeomMetrics seen = m;
        seen.dsc = std::clamp(m.dsc + model.dsc_sigma * rng.normal(), 0.0, 1.0);
        seen.sdsc = std::clamp(m.sdsc + model.sdsc_sigma * rng.normal(), 0.0, 1.0);
        seen.hd95_mm = std::max(0.0, m.hd95_mm * (1.0 + model.hd95_rel_sigma * rng.normal()));
        labels.push_back(geom::surrogate_label(seen, model.thresholds));
    }
    return labels;
}

std::vector<CaseBundle> bundles_from_samples(const std::vector<synth::SynthSample>& samples, int slices_per_subject,
                                             const RaterModel& raters, std::uint64_t seed, const std::string& prefix) {
    if (slices_per_subject < 1) throw ConfigError("slices_per_subject must be >= 1");
    std::vector<CaseBundle> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto subj = i / static_cast<std::size_t>(slices_per_subject);
        if (subj == out.size()) {
            char name[32];
            std::snprintf(name, sizeof name, "%s%04zu", prefix.c_str(), subj);
            out.push_back({name, samples[i].ref_mask.spacing(), {}});
        }
        auto& b = out.back();
        const auto& s = samples[i];
        BundleSlice sl;
        sl.index = static_cast<int>(b.slices.size());
        sl.image = quantize(s.image);
        sl.auto_mask = s.auto_mask;
        sl.auto_mask.set_subject(b.subject_id, sl.index);
        sl.ref_mask = s.ref_mask;
        sl.ref_mask->set_subject(b.subject_id, sl.index);
        sl.surrogate_label = s.label;
        sl.metrics = s.metrics;
        if (raters.raters > 0) sl.rater_labels = simulate_panel(s.metrics, raters, derive_seed(seed ^ 0x5241544552ULL, i));
        b.slices.push_back(std::move(sl));
    }
    return out;
}

void write_synth_dataset(const fs::path& root, const synth::Dataset& ds, int slices_per_subject,
                         const RaterModel& raters, std::uint64_t seed) {
    fs::create_directories(root);
    for (const auto& b : bundles_from_samples(ds.samples, slices_per_subject, raters, seed)) {
        write_case_bundle(root / b.subject_id, b);
    }
}

}  // namespace cqa::service
