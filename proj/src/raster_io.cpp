#include "uegan/raster_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace uegan {

namespace {

struct ByteReader {
    std::vector<char> bytes;
    std::size_t pos = 0;
    std::string path;

    explicit ByteReader(const std::string& p) : path(p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw ParseError("cannot open " + p, 0);
        bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    uint8_t u8() {
        if (pos >= bytes.size()) throw ParseError(path + ": truncated", pos);
        return static_cast<uint8_t>(bytes[pos++]);
    }

    void read(void* dst, std::size_t n) {
        if (pos + n > bytes.size()) throw ParseError(path + ": truncated payload", pos);
        std::memcpy(dst, bytes.data() + pos, n);
        pos += n;
    }

    uint16_t u16le() {
        uint8_t b0 = u8(), b1 = u8();
        return static_cast<uint16_t>(b0 | (b1 << 8));
    }

    uint32_t u32le() {
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(u8()) << (8 * i);
        return v;
    }

    bool eof() const { return pos >= bytes.size(); }
};

// PNM header: magic, optional #-comments, width, height, maxval.
struct PnmHeader {
    int w = 0, h = 0, maxval = 0;
};

PnmHeader read_pnm_header(ByteReader& r, const char* magic) {
    if (r.u8() != static_cast<uint8_t>(magic[0]) || r.u8() != static_cast<uint8_t>(magic[1]))
        throw ParseError(r.path + ": expected " + magic + " magic", 0);
    auto skip_ws = [&r] {
        for (;;) {
            if (r.eof()) throw ParseError(r.path + ": truncated header", r.pos);
            char c = r.bytes[r.pos];
            if (c == '#') {
                while (!r.eof() && r.bytes[r.pos] != '\n') ++r.pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++r.pos;
            } else {
                return;
            }
        }
    };
    auto read_int = [&] {
        skip_ws();
        long v = 0;
        bool any = false;
        while (!r.eof() && r.bytes[r.pos] >= '0' && r.bytes[r.pos] <= '9') {
            v = v * 10 + (r.bytes[r.pos] - '0');
            ++r.pos;
            any = true;
            if (v > 1000000) throw ParseError(r.path + ": header value too large", r.pos);
        }
        if (!any) throw ParseError(r.path + ": malformed header integer", r.pos);
        return static_cast<int>(v);
    };
    PnmHeader hdr;
    hdr.w = read_int();
    hdr.h = read_int();
    hdr.maxval = read_int();
    if (hdr.w < 1 || hdr.h < 1) throw ParseError(r.path + ": bad dimensions", r.pos);
    if (hdr.maxval != 255) throw ParseError(r.path + ": only maxval 255 supported", r.pos);
    // Exactly one whitespace byte separates header and payload.
    r.u8();
    return hdr;
}

void write_bytes(const std::string& path, const std::string& header,
                 const std::vector<uint8_t>& payload) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write " + path, 0);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!out) throw ParseError("short write to " + path, 0);
}

}  // namespace

Tensor load_ppm(const std::string& path) {
    ByteReader r(path);
    PnmHeader hdr = read_pnm_header(r, "P6");
    Tensor t(1, 3, hdr.h, hdr.w);
    std::vector<uint8_t> row(static_cast<std::size_t>(hdr.w) * 3);
    for (int y = 0; y < hdr.h; ++y) {
        r.read(row.data(), row.size());
        for (int x = 0; x < hdr.w; ++x)
            for (int c = 0; c < 3; ++c)
                t.at(0, c, y, x) = row[static_cast<std::size_t>(x) * 3 + c] / 255.f;
    }
    return t;
}

void save_ppm(const std::string& path, const Tensor& image) {
    if (image.n != 1 || image.c != 3) throw DimensionError("save_ppm: expected (1,3,H,W)");
    std::string header = "P6\n" + std::to_string(image.w) + " " + std::to_string(image.h) +
                         "\n255\n";
    std::vector<uint8_t> payload(static_cast<std::size_t>(image.h) * image.w * 3);
    std::size_t i = 0;
    for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x)
            for (int c = 0; c < 3; ++c) {
                float v = std::clamp(image.at(0, c, y, x), 0.f, 1.f);
                payload[i++] = static_cast<uint8_t>(std::lround(v * 255.f));
            }
    write_bytes(path, header, payload);
}

Raster load_raster_pgm(const std::string& path) {
    ByteReader r(path);
    PnmHeader hdr = read_pnm_header(r, "P5");
    Raster out(hdr.h, hdr.w);
    std::vector<uint8_t> row(static_cast<std::size_t>(hdr.w));
    for (int y = 0; y < hdr.h; ++y) {
        r.read(row.data(), row.size());
        for (int x = 0; x < hdr.w; ++x) out.at(y, x) = row[x] / 255.f;
    }
    return out;
}

Mask load_mask_pgm(const std::string& path) {
    Raster r = load_raster_pgm(path);
    Mask m(r.h, r.w);
    for (std::size_t i = 0; i < r.v.size(); ++i)
        m.v[i] = r.v[i] * 255.f >= 128.f ? 1 : 0;
    return m;
}

void save_pgm(const std::string& path, const Mask& mask) {
    std::string header = "P5\n" + std::to_string(mask.w) + " " + std::to_string(mask.h) +
                         "\n255\n";
    std::vector<uint8_t> payload(mask.v.size());
    for (std::size_t i = 0; i < mask.v.size(); ++i) payload[i] = mask.v[i] ? 255 : 0;
    write_bytes(path, header, payload);
}

void save_pgm(const std::string& path, const Raster& raster, bool autoscale) {
    float lo = 0.f, hi = 1.f;
    if (autoscale) {
        lo = std::numeric_limits<float>::max();
        hi = std::numeric_limits<float>::lowest();
        for (float v : raster.v) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi <= lo) hi = lo + 1.f;
    }
    std::string header = "P5\n" + std::to_string(raster.w) + " " + std::to_string(raster.h) +
                         "\n255\n";
    std::vector<uint8_t> payload(raster.v.size());
    for (std::size_t i = 0; i < raster.v.size(); ++i) {
        float v = std::clamp((raster.v[i] - lo) / (hi - lo), 0.f, 1.f);
        payload[i] = static_cast<uint8_t>(std::lround(v * 255.f));
    }
    write_bytes(path, header, payload);
}

void save_checkpoint(const std::string& path, const ParamSet& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write " + path, 0);
    out.write("UEGT", 4);
    auto w32 = [&out](uint32_t v) {
        char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
        out.write(b, 4);
    };
    for (const auto& [name, t] : params.items) {
        if (name.size() > 0xffff) throw ContractError("tensor name too long");
        char len[2] = {static_cast<char>(name.size() & 0xff),
                       static_cast<char>((name.size() >> 8) & 0xff)};
        out.write(len, 2);
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        w32(4);
        w32(static_cast<uint32_t>(t->n));
        w32(static_cast<uint32_t>(t->c));
        w32(static_cast<uint32_t>(t->h));
        w32(static_cast<uint32_t>(t->w));
        static_assert(sizeof(float) == 4);
        out.write(reinterpret_cast<const char*>(t->data.data()),
                  static_cast<std::streamsize>(t->data.size() * 4));
    }
    if (!out) throw ParseError("short write to " + path, 0);
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
    ByteReader r(path);
    char magic[4];
    r.read(magic, 4);
    if (std::memcmp(magic, "UEGT", 4) != 0)
        throw ParseError(path + ": bad checkpoint magic", 0);
    std::vector<std::pair<std::string, Tensor>> out;
    while (!r.eof()) {
        uint16_t len = r.u16le();
        std::string name(len, '\0');
        r.read(name.data(), len);
        uint32_t rank = r.u32le();
        if (rank < 1 || rank > 4) throw ParseError(path + ": unsupported rank", r.pos);
        uint32_t dims[4] = {1, 1, 1, 1};
        // Ranks below 4 fill the leading axes with 1.
        for (uint32_t i = 0; i < rank; ++i) dims[4 - rank + i] = r.u32le();
        Tensor t(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                 static_cast<int>(dims[2]), static_cast<int>(dims[3]));
        r.read(t.data.data(), t.data.size() * 4);
        out.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

void load_checkpoint_into(const std::string& path, ParamSet& params) {
    auto entries = load_checkpoint(path);
    if (entries.size() != params.items.size())
        throw ConfigError(path + ": checkpoint has " + std::to_string(entries.size()) +
                          " tensors, model expects " + std::to_string(params.items.size()));
    for (auto& [name, t] : entries) {
        auto p = params.get(name);
        if (!p->same_shape(t))
            throw ConfigError(path + ": shape mismatch for " + name + ": " + t.shape_str() +
                              " vs " + p->shape_str());
        p->data = std::move(t.data);
    }
}

}  // namespace uegan
