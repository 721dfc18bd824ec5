#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxcur/core/errors.hpp"
#include "voxcur/phantom/phantom.hpp"

namespace voxcur::phantom {

namespace fs = std::filesystem;
using nlohmann::json;

// On-disk dataset layout, format_version 1:
//   <root>/<patient_id>/volume.raw   little-endian float32, c-major then x,y,z
//   <root>/<patient_id>/meta.json    shape, channels, lesions, labels, config echo

inline json config_to_json(const PhantomConfig& c) {
    return json{{"n_patients", c.n_patients},
                {"volume_shape", {c.volume_shape.x, c.volume_shape.y, c.volume_shape.z}},
                {"n_timepoints", c.n_timepoints},
                {"include_t2", c.include_t2},
                {"malignant_patient_fraction", c.malignant_patient_fraction},
                {"lesion_radius_min", c.lesion_radius_min},
                {"lesion_radius_max", c.lesion_radius_max},
                {"noise_sigma", c.noise_sigma},
                {"seed", c.seed},
                {"body_y_fraction", c.body_y_fraction},
                {"healthy_breast_prob", c.healthy_breast_prob},
                {"max_lesions_per_breast", c.max_lesions_per_breast},
                {"lesion_amplitude", c.lesion_amplitude},
                {"background_amplitude", c.background_amplitude}};
}

inline PhantomConfig config_from_json(const json& j) {
    PhantomConfig c;
    c.n_patients = j.value("n_patients", c.n_patients);
    if (j.contains("volume_shape")) {
        auto s = j.at("volume_shape");
        c.volume_shape = {s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<int>()};
    }
    c.n_timepoints = j.value("n_timepoints", c.n_timepoints);
    c.include_t2 = j.value("include_t2", c.include_t2);
    c.malignant_patient_fraction =
        j.value("malignant_patient_fraction", c.malignant_patient_fraction);
    c.lesion_radius_min = j.value("lesion_radius_min", c.lesion_radius_min);
    c.lesion_radius_max = j.value("lesion_radius_max", c.lesion_radius_max);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.seed = j.value("seed", c.seed);
    c.body_y_fraction = j.value("body_y_fraction", c.body_y_fraction);
    c.healthy_breast_prob = j.value("healthy_breast_prob", c.healthy_breast_prob);
    c.max_lesions_per_breast = j.value("max_lesions_per_breast", c.max_lesions_per_breast);
    c.lesion_amplitude = j.value("lesion_amplitude", c.lesion_amplitude);
    c.background_amplitude = j.value("background_amplitude", c.background_amplitude);
    return c;
}

inline std::vector<std::string> channel_names(const PhantomConfig& cfg) {
    std::vector<std::string> names;
    for (int t = 0; t < cfg.n_timepoints; ++t) names.push_back("dce_t" + std::to_string(t));
    if (cfg.include_t2) names.push_back("t2");
    return names;
}

inline void write_case(const fs::path& root, const PatientCase& pc,
                       const PhantomConfig& cfg) {
    fs::path dir = root / pc.patient_id;
    fs::create_directories(dir);

    {
        std::ofstream raw(dir / "volume.raw", std::ios::binary);
        if (!raw) throw IoError("cannot write " + (dir / "volume.raw").string());
        raw.write(reinterpret_cast<const char*>(pc.volume.data.data()),
                  static_cast<std::streamsize>(pc.volume.size() * sizeof(float)));
    }

    json lesions = json::array();
    for (const auto& l : pc.lesions)
        lesions.push_back({{"center", {l.center.x, l.center.y, l.center.z}},
                           {"malignant", l.malignant},
                           {"radius", l.radius}});
    json meta{{"format_version", 1},
              {"patient_id", pc.patient_id},
              {"shape", {pc.volume.c, pc.volume.x, pc.volume.y, pc.volume.z}},
              {"channel_names", channel_names(cfg)},
              {"lesions", lesions},
              {"left_label", pc.left_label},
              {"right_label", pc.right_label},
              {"generator_config", config_to_json(cfg)}};
    std::ofstream mf(dir / "meta.json");
    mf << meta.dump(2) << "\n";
}

inline PatientCase read_case(const fs::path& dir) {
    std::ifstream mf(dir / "meta.json");
    if (!mf) throw IoError("cannot read " + (dir / "meta.json").string());
    json meta = json::parse(mf);
    if (meta.value("format_version", 0) != 1)
        throw IoError("unsupported dataset format_version in " + dir.string());

    PatientCase pc;
    pc.patient_id = meta.at("patient_id").get<std::string>();
    auto sh = meta.at("shape");
    pc.volume = Volume<float>(sh.at(0).get<int>(), sh.at(1).get<int>(),
                              sh.at(2).get<int>(), sh.at(3).get<int>());
    {
        std::ifstream raw(dir / "volume.raw", std::ios::binary);
        if (!raw) throw IoError("cannot read " + (dir / "volume.raw").string());
        raw.read(reinterpret_cast<char*>(pc.volume.data.data()),
                 static_cast<std::streamsize>(pc.volume.size() * sizeof(float)));
        if (raw.gcount() != static_cast<std::streamsize>(pc.volume.size() * sizeof(float)))
            throw IoError("volume.raw truncated in " + dir.string());
    }
    for (const auto& l : meta.at("lesions")) {
        LesionAnnotation a;
        auto c = l.at("center");
        a.center = {c.at(0).get<int>(), c.at(1).get<int>(), c.at(2).get<int>()};
        a.malignant = l.at("malignant").get<bool>();
        a.radius = l.at("radius").get<double>();
        pc.lesions.push_back(a);
    }
    pc.left_label = meta.at("left_label").get<bool>();
    pc.right_label = meta.at("right_label").get<bool>();
    return pc;
}

inline void write_dataset(const fs::path& root, const std::vector<PatientCase>& cases,
                          const PhantomConfig& cfg) {
    fs::create_directories(root);
    for (const auto& pc : cases) write_case(root, pc, cfg);
}

inline std::vector<PatientCase> read_dataset(const fs::path& root) {
    if (!fs::exists(root)) throw IoError("dataset directory not found: " + root.string());
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / "meta.json")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    std::vector<PatientCase> cases;
    cases.reserve(dirs.size());
    for (const auto& d : dirs) cases.push_back(read_case(d));
    return cases;
}

}  // namespace voxcur::phantom
