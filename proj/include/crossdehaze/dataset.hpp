#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "crossdehaze/error.hpp"
#include "crossdehaze/image.hpp"
#include "crossdehaze/image_io.hpp"

namespace crossdehaze {

struct DatasetPair {
    std::string id;
    Image hazy;
    Image clean;
    std::string provenance;  // synthetic | aligned | external
};

struct Dataset {
    std::vector<DatasetPair> pairs;

    size_t size() const { return pairs.size(); }
    bool empty() const { return pairs.empty(); }

    void validate() const {
        std::unordered_set<std::string> seen;
        for (const auto& p : pairs) {
            require(p.hazy.same_dims(p.clean), Errc::dimension_mismatch,
                    "pair '" + p.id + "': hazy/clean dimensions differ");
            require(seen.insert(p.id).second, Errc::invalid_argument,
                    "duplicate pair id '" + p.id + "'");
        }
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace detail

/// On-disk layout: <dir>/manifest.csv with columns id,hazy_path,clean_path,
/// provenance (paths relative to the dataset directory), plus the image
/// files. Lines starting with '#' carry auxiliary key=value metadata such
/// as the gamma triple recorded by alignment.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir,
                         ImageFormat format = ImageFormat::imgf,
                         const std::vector<std::string>& meta_lines = {}) {
    ds.validate();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream manifest(dir / "manifest.csv", std::ios::trunc);
    if (!manifest) fail(Errc::io_failure, "cannot write manifest in " + dir.string());

    const char* ext = format == ImageFormat::imgf ? ".imgf" : ".ppm";
    manifest << "id,hazy_path,clean_path,provenance\n";
    for (const auto& m : meta_lines) manifest << "# " << m << "\n";
    for (const auto& p : ds.pairs) {
        const std::string hazy_name = p.id + "_hazy" + ext;
        const std::string clean_name = p.id + "_clean" + ext;
        save_image(p.hazy, dir / hazy_name, format);
        save_image(p.clean, dir / clean_name, format);
        manifest << p.id << "," << hazy_name << "," << clean_name << "," << p.provenance << "\n";
    }
    if (!manifest) fail(Errc::io_failure, "manifest write failed in " + dir.string());
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.csv");
    if (!manifest) fail(Errc::file_not_found, "no manifest.csv in " + dir.string());

    Dataset ds;
    std::string line;
    bool header_seen = false;
    while (std::getline(manifest, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            require(detail::split_csv_line(line).size() == 4, Errc::malformed_header,
                    "manifest header must have 4 columns");
            continue;
        }
        auto fields = detail::split_csv_line(line);
        require(fields.size() == 4, Errc::malformed_header, "manifest row must have 4 columns: " + line);
        DatasetPair p;
        p.id = fields[0];
        p.hazy = load_image(dir / fields[1]);
        p.clean = load_image(dir / fields[2]);
        p.provenance = fields[3];
        ds.pairs.push_back(std::move(p));
    }
    require(header_seen, Errc::malformed_header, "empty manifest in " + dir.string());
    ds.validate();
    return ds;
}

/// Reads the '#'-prefixed metadata lines of a manifest (key=value text).
inline std::vector<std::string> load_dataset_meta(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.csv");
    if (!manifest) fail(Errc::file_not_found, "no manifest.csv in " + dir.string());
    std::vector<std::string> meta;
    std::string line;
    while (std::getline(manifest, line))
        if (!line.empty() && line[0] == '#') meta.push_back(line.substr(line.find_first_not_of("# ")));
    return meta;
}

}  // namespace crossdehaze
