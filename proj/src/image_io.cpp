#include "msvar/image_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace msvar {

namespace {

struct Netpbm {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    unsigned maxval = 0;
    std::vector<unsigned> samples;
};

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path.string());
    return bytes;
}

void write_all(const std::filesystem::path& path, const std::string& header, const void* data, std::size_t size) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    out.close();
    if (!out) throw IoError("write failed: " + path.string());
}

Netpbm parse_netpbm(const std::filesystem::path& path) {
    const auto bytes = read_all(path);
    std::size_t pos = 0;
    auto fail = [&](const std::string& what) -> IoError { return IoError(path.string() + ": " + what); };
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_uint = [&]() -> std::size_t {
        skip_space();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw fail("malformed header");
        std::size_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos++] - '0');
            if (v > (1u << 30)) throw fail("header value too large");
        }
        return v;
    };

    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw fail("not a binary PGM (P5) or PPM (P6) file");
    }
    pos = 2;
    Netpbm img;
    img.channels = bytes[1] == '5' ? 1 : 3;
    img.width = read_uint();
    img.height = read_uint();
    const std::size_t maxval = read_uint();
    if (img.width == 0 || img.height == 0) throw fail("zero image dimension");
    if (maxval == 0 || maxval > 65535) throw fail("maxval must be in [1, 65535]");
    img.maxval = static_cast<unsigned>(maxval);
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw fail("malformed header");
    ++pos;

    const std::size_t count = img.width * img.height * img.channels;
    const std::size_t bytes_per = maxval > 255 ? 2 : 1;
    if (bytes.size() - pos < count * bytes_per) throw fail("truncated pixel data");
    img.samples.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (bytes_per == 1) {
            img.samples[i] = bytes[pos + i];
        } else {
            img.samples[i] = (static_cast<unsigned>(bytes[pos + 2 * i]) << 8) | bytes[pos + 2 * i + 1];
        }
        if (img.samples[i] > img.maxval) throw fail("sample exceeds maxval");
    }
    return img;
}

std::string header(char kind, std::size_t width, std::size_t height) {
    return std::string("P") + kind + "\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
    const Netpbm img = parse_netpbm(path);
    std::vector<double> values(img.samples.size());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = img.samples[i] / static_cast<double>(img.maxval);
    return Image(img.height, img.width, img.channels, std::move(values));
}

void write_image(const std::filesystem::path& path, const Image& image) {
    if (image.channels() != 1 && image.channels() != 3) {
        throw IoError("only 1- or 3-channel images can be written, got " + std::to_string(image.channels()));
    }
    std::vector<unsigned char> data(image.values().size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = static_cast<unsigned char>(std::lround(std::clamp(image.values()[i], 0.0, 1.0) * 255.0));
    }
    write_all(path, header(image.channels() == 1 ? '5' : '6', image.width(), image.height()), data.data(),
              data.size());
}

LabelMap read_labels(const std::filesystem::path& path) {
    const Netpbm img = parse_netpbm(path);
    if (img.channels != 1 || img.maxval > 255) throw IoError(path.string() + ": label maps must be 8-bit P5");
    std::vector<std::uint8_t> labels(img.samples.begin(), img.samples.end());
    return LabelMap(img.height, img.width, std::move(labels));
}

void write_labels(const std::filesystem::path& path, const LabelMap& labels) {
    write_all(path, header('5', labels.width(), labels.height()), labels.labels().data(), labels.size());
}

void write_field_pgm(const std::filesystem::path& path, const ScalarField& field) {
    const auto [lo, hi] = std::minmax_element(field.values().begin(), field.values().end());
    std::vector<unsigned char> data(field.size(), 128);
    if (*hi > *lo) {
        for (std::size_t i = 0; i < data.size(); ++i) {
            data[i] = static_cast<unsigned char>(std::lround((field[i] - *lo) / (*hi - *lo) * 255.0));
        }
    }
    write_all(path, header('5', field.width(), field.height()), data.data(), data.size());
}

void write_raw_f64(const std::filesystem::path& path, const ScalarField& field) {
    std::vector<unsigned char> data(field.size() * 8);
    for (std::size_t i = 0; i < field.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(field[i]);
        for (int b = 0; b < 8; ++b) data[8 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    write_all(path, "", data.data(), data.size());
}

ScalarField read_raw_f64(const std::filesystem::path& path, std::size_t height, std::size_t width) {
    const auto bytes = read_all(path);
    if (bytes.size() != height * width * 8) {
        throw IoError(path.string() + ": expected " + std::to_string(height * width * 8) + " bytes, found " +
                      std::to_string(bytes.size()));
    }
    std::vector<double> values(height * width);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[8 * i + b]) << (8 * b);
        values[i] = std::bit_cast<double>(bits);
    }
    return ScalarField(height, width, std::move(values));
}

void write_trace_csv(const std::filesystem::path& path, std::span<const TraceRow> trace, bool with_bias) {
    std::string text = with_bias ? "iter,loss,data_term,tv_term,bias_tv_term\n" : "iter,loss,data_term,tv_term\n";
    std::array<char, 128> buf{};
    for (const auto& row : trace) {
        if (with_bias) {
            std::snprintf(buf.data(), buf.size(), "%zu,%.17g,%.17g,%.17g,%.17g\n", row.iter, row.loss, row.data_term,
                          row.tv_term, row.bias_tv_term);
        } else {
            std::snprintf(buf.data(), buf.size(), "%zu,%.17g,%.17g,%.17g\n", row.iter, row.loss, row.data_term,
                          row.tv_term);
        }
        text += buf.data();
    }
    write_all(path, text, nullptr, 0);
}

}  // namespace msvar
