#include <cstdlib>
#include <fstream>
#include <set>

#include "json.hpp"
#include "panet/data/dataset.hpp"

namespace panet {

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open manifest '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest '" + path + "' is not valid JSON: " + e.what());
    }
    DatasetManifest m;
    if (!j.contains("task")) throw DataError("manifest '" + path + "' is missing the 'task' field");
    m.task = j["task"].get<std::string>();
    if (m.task != "covid-2d" && m.task != "brats-3d")
        throw DataError("manifest '" + path + "': unknown task '" + m.task + "'");
    const char* env_root = std::getenv("PANET_DATA_ROOT");
    if (env_root && *env_root)
        m.root = env_root;
    else if (j.contains("root"))
        m.root = std::filesystem::path(path).parent_path() / j["root"].get<std::string>();
    else
        m.root = std::filesystem::path(path).parent_path();

    if (!j.contains("entries") || !j["entries"].is_array() || j["entries"].empty())
        throw DataError("manifest '" + path + "' has no entries");
    std::set<std::string> ids;
    size_t index = 0;
    for (const auto& je : j["entries"]) {
        ManifestEntry e;
        const std::string at = "manifest entry " + std::to_string(index);
        if (!je.contains("id")) throw DataError(at + " is missing 'id'");
        e.id = je["id"].get<std::string>();
        if (!ids.insert(e.id).second) throw DataError(at + ": duplicate case id '" + e.id + "'");
        if (je.contains("images"))
            e.images = je["images"].get<std::vector<std::string>>();
        else if (je.contains("image"))
            e.images = {je["image"].get<std::string>()};
        if (e.images.empty()) throw DataError(at + " ('" + e.id + "') lists no images");
        if (m.task == "covid-2d" && e.images.size() != 1)
            throw DataError(at + " ('" + e.id + "'): covid-2d cases take exactly one image");
        if (!je.contains("label")) throw DataError(at + " ('" + e.id + "') is missing 'label'");
        e.label = je["label"].get<std::string>();
        e.split = je.value("split", "");
        for (const auto& img : e.images)
            if (!std::filesystem::exists(m.root / img))
                throw DataError(at + " ('" + e.id + "'): image file '" + (m.root / img).string() + "' does not exist");
        if (!std::filesystem::exists(m.root / e.label))
            throw DataError(at + " ('" + e.id + "'): label file '" + (m.root / e.label).string() + "' does not exist");
        m.entries.push_back(std::move(e));
        ++index;
    }
    return m;
}

std::pair<DatasetManifest, DatasetManifest> split_manifest(const DatasetManifest& m, int64_t test_count,
                                                           uint64_t seed) {
    const int64_t n = static_cast<int64_t>(m.entries.size());
    if (test_count >= n)
        throw DataError("split: test_count " + std::to_string(test_count) + " must be smaller than the dataset (" +
                        std::to_string(n) + ")");
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(mix_seed(seed, 0x5eedu));
    for (int64_t i = n - 1; i > 0; --i) std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(0, i))]);
    DatasetManifest train = m, test = m;
    train.entries.clear();
    test.entries.clear();
    for (int64_t i = 0; i < n; ++i)
        (i < test_count ? test : train).entries.push_back(m.entries[static_cast<size_t>(order[static_cast<size_t>(i)])]);
    return {train, test};
}

std::pair<DatasetManifest, DatasetManifest> resolve_splits(const DatasetManifest& m, int64_t test_count,
                                                           uint64_t seed) {
    bool has_tags = false;
    for (const auto& e : m.entries) has_tags |= e.split == "test";
    if (!has_tags) return split_manifest(m, test_count, seed);
    DatasetManifest train = m, test = m;
    train.entries.clear();
    test.entries.clear();
    for (const auto& e : m.entries) (e.split == "test" ? test : train).entries.push_back(e);
    return {train, test};
}

std::vector<int> kfold_assignments(int64_t n, int folds, uint64_t seed) {
    if (folds < 2) throw ConfigError("kfold: need at least 2 folds");
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(mix_seed(seed, 0xf01d5u));
    for (int64_t i = n - 1; i > 0; --i) std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(0, i))]);
    std::vector<int> fold(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) fold[static_cast<size_t>(order[static_cast<size_t>(i)])] = static_cast<int>(i % folds);
    return fold;
}

SegCase load_case(const DatasetManifest& m, const ManifestEntry& entry) {
    SegCase c;
    c.id = entry.id;
    if (m.task == "covid-2d") {
        const U8Tensor img = read_pgm((m.root / entry.images[0]).string());
        const U8Tensor lab = read_pgm((m.root / entry.label).string());
        require(same_shape(img.shape(), lab.shape()),
                "case '" + entry.id + "': image and label sizes differ (" + shape_str(img.shape()) + " vs " +
                    shape_str(lab.shape()) + ")");
        c.image = FTensor({1, img.size(0), img.size(1)});
        for (int64_t i = 0; i < img.numel(); ++i) c.image[i] = static_cast<float>(img[i]) / 255.0f;
        c.labels = lab;
        for (int64_t i = 0; i < lab.numel(); ++i)
            if (lab[i] > 2)
                throw DataError("case '" + entry.id + "': label value " + std::to_string(int(lab[i])) +
                                " outside {0,1,2}");
        c.spacing = {1.0, 1.0};
        return c;
    }
    // brats-3d: one NIfTI per modality plus a label volume
    std::vector<NiftiVolume> mods;
    for (const auto& img : entry.images) mods.push_back(read_nifti((m.root / img).string()));
    const NiftiVolume lab = read_nifti((m.root / entry.label).string());
    const Shape vs = mods[0].data.shape();
    for (const auto& v : mods)
        require(same_shape(v.data.shape(), vs), "case '" + entry.id + "': modality volumes differ in size");
    require(same_shape(lab.data.shape(), vs), "case '" + entry.id + "': label volume size differs from image");
    c.image = FTensor({static_cast<int64_t>(mods.size()), vs[0], vs[1], vs[2]});
    const int64_t sp = numel_of(vs);
    for (size_t mi = 0; mi < mods.size(); ++mi)
        std::copy(mods[mi].data.data(), mods[mi].data.data() + sp, c.image.data() + static_cast<int64_t>(mi) * sp);
    c.labels = U8Tensor(vs);
    for (int64_t i = 0; i < sp; ++i) {
        const int v = static_cast<int>(std::lround(lab.data[i]));
        if (v != 0 && v != 1 && v != 2 && v != 4)
            throw DataError("case '" + entry.id + "': label value " + std::to_string(v) + " outside {0,1,2,4}");
        c.labels[i] = static_cast<uint8_t>(v);
    }
    c.spacing = lab.spacing;
    c.nifti_header = lab.header;
    return c;
}



CaseSource memory_source(std::vector<SegCase> cases) {
    auto shared = std::make_shared<std::vector<SegCase>>(std::move(cases));
    CaseSource s;
    for (const auto& c : *shared) s.ids.push_back(c.id);
    s.load = [shared](size_t i) { return shared->at(i); };
    return s;
}

CaseSource manifest_source(const DatasetManifest& m) {
    auto shared = std::make_shared<DatasetManifest>(m);
    CaseSource s;
    for (const auto& e : shared->entries) s.ids.push_back(e.id);
    s.load = [shared](size_t i) { return load_case(*shared, shared->entries.at(i)); };
    return s;
}

}  // namespace panet
