#pragma once

// Checkpoint file: "NNCK" | u32 header length | JSON header | float32
// parameter blobs (row-major) in declaration order.

#include <sensekit/detail/binary_io.hpp>
#include <sensekit/nn/network.hpp>

#include <fstream>
#include <sstream>

namespace sensekit::nn {

template <typename T>
struct Checkpoint {
    Network<T> network;
    nlohmann::json extra; ///< caller metadata (normalisation, task, ...)
};

template <typename T>
void write_checkpoint(std::ostream& os, Network<T>& net, const nlohmann::json& extra = nlohmann::json::object()) {
    nlohmann::json params = nlohmann::json::array();
    net.visit([&](const std::string& name, Mat<T>& v, Mat<T>&) {
        params.push_back({{"name", name}, {"rows", v.rows()}, {"cols", v.cols()}});
    });
    const nlohmann::json header = {{"spec", model_spec_to_json(net.spec())}, {"params", params}, {"extra", extra}};
    const std::string text = header.dump();
    sensekit::detail::write_magic(os, "NNCK");
    sensekit::detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    net.visit([&](const std::string&, Mat<T>& v, Mat<T>&) {
        for (Eigen::Index r = 0; r < v.rows(); ++r) {
            for (Eigen::Index c = 0; c < v.cols(); ++c) sensekit::detail::write_le<float>(os, static_cast<float>(v(r, c)));
        }
    });
    if (!os) throw DataError("failed to write checkpoint");
}

template <typename T>
Checkpoint<T> read_checkpoint(std::istream& is) {
    sensekit::detail::expect_magic(is, "NNCK", "checkpoint");
    const auto len = sensekit::detail::read_le<std::uint32_t>(is);
    const std::string text = sensekit::detail::read_bytes(is, len);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }
    ModelSpec spec;
    try {
        spec = model_spec_from_json(header.at("spec"));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint spec is malformed: ") + e.what());
    }
    Checkpoint<T> ck{Network<T>(spec), header.value("extra", nlohmann::json::object())};
    const auto& params = header.at("params");
    std::size_t k = 0;
    ck.network.visit([&](const std::string& name, Mat<T>& v, Mat<T>&) {
        if (k >= params.size() || params[k].at("name") != name || params[k].at("rows") != v.rows() || params[k].at("cols") != v.cols()) {
            throw CompatibilityError("checkpoint parameter " + std::to_string(k) + " (" + name + ") does not match the model spec");
        }
        ++k;
        for (Eigen::Index r = 0; r < v.rows(); ++r) {
            for (Eigen::Index c = 0; c < v.cols(); ++c) v(r, c) = static_cast<T>(sensekit::detail::read_le<float>(is));
        }
    });
    if (k != params.size()) throw CompatibilityError("checkpoint lists more parameters than the model spec declares");
    return ck;
}

template <typename T>
void save_checkpoint(const std::string& path, Network<T>& net, const nlohmann::json& extra = nlohmann::json::object()) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path + " for writing");
    write_checkpoint(os, net, extra);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint " + path);
    return read_checkpoint<T>(is);
}

} // namespace sensekit::nn
