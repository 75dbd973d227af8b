#pragma once

#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtda/data.hpp"
#include "mtda/trainer.hpp"

namespace mtda {

// IDX input description for one domain; domain 0 is the source.
struct IdxSource {
    std::string images_path;
    std::string labels_path;
};

// Parsed run configuration: flat `key = value` lines, '#' comments,
// order-independent, unknown or duplicate keys rejected.
struct AppConfig {
    enum class DataKind { synthetic, idx };
    DataKind data_kind = DataKind::synthetic;
    SyntheticSpec synthetic;
    std::vector<IdxSource> idx_domains;
    std::size_t idx_downsample = 0;

    std::size_t feature_dim = 2;
    std::size_t encoder_hidden = 128;
    std::size_t private_encoder_hidden = 128;
    std::size_t decoder_hidden = 64;
    std::vector<std::size_t> domain_hidden = {64, 64, 64};
    std::size_t label_hidden = 64;

    TrainConfig train;
    std::string out_dir;

    // Builds the five network configurations once the data dimensions are
    // known (input width, class count, effective domain count).
    NetConfigSet make_nets(std::size_t input_dim, std::size_t classes, std::size_t domains) const;
    // Loads or generates the datasets this config describes.
    std::vector<DomainDataset> load_datasets() const;
    // Completes train.nets/num_classes from the datasets.
    TrainConfig finalize_train_config(const std::vector<DomainDataset>& datasets) const;
};

AppConfig parse_config(std::istream& in, const std::string& origin = "<stream>");
AppConfig parse_config_file(const std::string& path);

}  // namespace mtda
