#include "aird/checkpoint.hpp"

#include <cstring>

#include "aird/binio.hpp"

namespace aird {

namespace {

constexpr char checkpoint_magic[9] = "AIRDCKPT";
constexpr std::uint32_t checkpoint_version = 1;

void write_section_tag(binary_writer& out, const char* tag) {
    char buf[4] = {0, 0, 0, 0};
    std::strncpy(buf, tag, 4);
    out.bytes({reinterpret_cast<const std::uint8_t*>(buf), 4});
}

std::string read_section_tag(binary_reader& in) {
    std::uint8_t buf[4];
    in.bytes({buf, 4});
    std::string tag;
    for (std::uint8_t c : buf)
        if (c != 0) tag.push_back(static_cast<char>(c));
    return tag;
}

void write_layers(binary_writer& out, const std::vector<const dense_net*>& nets) {
    std::uint32_t count = 0;
    for (const auto* net : nets) count += static_cast<std::uint32_t>(net->layers.size());
    out.u32(count);
    for (const auto* net : nets) {
        for (const auto& l : net->layers) {
            out.u32(static_cast<std::uint32_t>(l.w.cols));
            out.u32(static_cast<std::uint32_t>(l.w.rows));
            out.u8(static_cast<std::uint8_t>(l.act));
            out.f32_array(l.w.a);
            out.f32_array(l.b);
        }
    }
}

std::vector<dense_layer> read_layers(binary_reader& in) {
    const std::uint32_t count = in.u32();
    if (count == 0 || count > 1024) throw io_error("checkpoint: implausible layer count");
    std::vector<dense_layer> layers(count);
    for (auto& l : layers) {
        const std::uint32_t in_dim = in.u32();
        const std::uint32_t out_dim = in.u32();
        const std::uint8_t code = in.u8();
        if (code > 2) throw io_error("checkpoint: bad activation code");
        if (in_dim == 0 || out_dim == 0) throw io_error("checkpoint: zero layer dimension");
        l.w = mat(out_dim, in_dim);
        l.b.assign(out_dim, 0.0f);
        l.act = static_cast<activation>(code);
        in.f32_array(l.w.a);
        in.f32_array(l.b);
    }
    return layers;
}

void write_encoder(binary_writer& out, const metadata_encoder& enc) {
    out.u32(enc.vocab_size);
    out.u32(enc.d_m);
    out.f32_array(enc.table);
}

metadata_encoder read_encoder(binary_reader& in) {
    metadata_encoder enc;
    enc.vocab_size = in.u32();
    enc.d_m = in.u32();
    if (enc.vocab_size == 0 || enc.d_m == 0) throw io_error("checkpoint: empty encoder table");
    enc.table.resize(static_cast<std::size_t>(enc.vocab_size) * enc.d_m);
    in.f32_array(enc.table);
    return enc;
}

void write_optimizer(binary_writer& out, const optimizer_snapshot* opt) {
    out.u8(opt ? 1 : 0);
    if (!opt) return;
    out.u64(opt->step);
    out.u32(static_cast<std::uint32_t>(opt->m.size()));
    for (std::size_t t = 0; t < opt->m.size(); ++t) {
        out.u32(static_cast<std::uint32_t>(opt->m[t].size()));
        out.f32_array(opt->m[t]);
        out.f32_array(opt->v[t]);
    }
    out.u32(static_cast<std::uint32_t>(opt->row_step.size()));
    for (std::uint64_t s : opt->row_step) out.u64(s);
    out.f32_array(opt->row_m);
    out.f32_array(opt->row_v);
}

std::optional<optimizer_snapshot> read_optimizer(binary_reader& in, std::size_t table_size) {
    if (in.u8() == 0) return std::nullopt;
    optimizer_snapshot opt;
    opt.step = in.u64();
    const std::uint32_t tensors = in.u32();
    opt.m.resize(tensors);
    opt.v.resize(tensors);
    for (std::uint32_t t = 0; t < tensors; ++t) {
        const std::uint32_t size = in.u32();
        opt.m[t].resize(size);
        opt.v[t].resize(size);
        in.f32_array(opt.m[t]);
        in.f32_array(opt.v[t]);
    }
    const std::uint32_t rows = in.u32();
    opt.row_step.resize(rows);
    for (auto& s : opt.row_step) s = in.u64();
    opt.row_m.resize(table_size);
    opt.row_v.resize(table_size);
    in.f32_array(opt.row_m);
    in.f32_array(opt.row_v);
    return opt;
}

} // namespace

void save_mg_checkpoint(const std::string& path, const mg_model& mg, const metadata_encoder& enc,
                        const optimizer_snapshot* opt) {
    binary_writer out(path);
    out.magic(checkpoint_magic);
    out.u32(checkpoint_version);
    write_section_tag(out, "MG");
    write_layers(out, {&mg.cssn});
    write_encoder(out, enc);
    write_optimizer(out, opt);
    out.finish();
}

void save_cv_checkpoint(const std::string& path, const cv_model& cv, const metadata_encoder& enc,
                        const optimizer_snapshot* opt) {
    binary_writer out(path);
    out.magic(checkpoint_magic);
    out.u32(checkpoint_version);
    write_section_tag(out, "CV");
    write_layers(out, {&cv.agg_img, &cv.agg_meta, &cv.fuse_img, &cv.fuse_meta, &cv.fuse_cross,
                       &cv.judge});
    write_encoder(out, enc);
    write_optimizer(out, opt);
    out.finish();
}

mg_checkpoint load_mg_checkpoint(const std::string& path) {
    binary_reader in(path);
    in.expect_magic(checkpoint_magic);
    if (in.u32() != checkpoint_version) throw io_error(path + ": unsupported checkpoint version");
    const auto tag = read_section_tag(in);
    if (tag != "MG") throw io_error(path + ": expected MG section, found " + tag);
    auto layers = read_layers(in);
    if (layers.size() != 3) throw io_error(path + ": MG checkpoint must hold 3 layers");

    mg_checkpoint ck;
    ck.mg.cssn.layers = std::move(layers);
    ck.encoder = read_encoder(in);
    const std::size_t cssn_in = ck.mg.cssn.input_size();
    if (cssn_in % 2 != 0 || cssn_in / 2 <= ck.encoder.d_m)
        throw io_error(path + ": inconsistent MG dimensions");
    ck.mg.d_m = ck.encoder.d_m;
    ck.mg.d_i = static_cast<std::uint32_t>(cssn_in / 2 - ck.encoder.d_m);
    ck.optimizer = read_optimizer(in, ck.encoder.table.size());
    return ck;
}

cv_checkpoint load_cv_checkpoint(const std::string& path) {
    binary_reader in(path);
    in.expect_magic(checkpoint_magic);
    if (in.u32() != checkpoint_version) throw io_error(path + ": unsupported checkpoint version");
    const auto tag = read_section_tag(in);
    if (tag != "CV") throw io_error(path + ": expected CV section, found " + tag);
    auto layers = read_layers(in);
    if (layers.size() != 8) throw io_error(path + ": CV checkpoint must hold 8 layers");

    cv_checkpoint ck;
    auto take = [&](dense_net& net, std::size_t first, std::size_t count) {
        net.layers.assign(std::make_move_iterator(layers.begin() + first),
                          std::make_move_iterator(layers.begin() + first + count));
    };
    take(ck.cv.agg_img, 0, 2);
    take(ck.cv.agg_meta, 2, 2);
    take(ck.cv.fuse_img, 4, 1);
    take(ck.cv.fuse_meta, 5, 1);
    take(ck.cv.fuse_cross, 6, 1);
    take(ck.cv.judge, 7, 1);
    ck.encoder = read_encoder(in);

    const std::size_t meta_in = ck.cv.agg_meta.input_size();
    if (meta_in % ck.encoder.d_m != 0 || meta_in / ck.encoder.d_m < 2)
        throw io_error(path + ": inconsistent CV metadata dimensions");
    const auto k_plus_1 = static_cast<std::uint32_t>(meta_in / ck.encoder.d_m);
    ck.cv.d_m = ck.encoder.d_m;
    ck.cv.k = k_plus_1 - 1;
    const std::size_t img_in = ck.cv.agg_img.input_size();
    if (img_in % k_plus_1 != 0) throw io_error(path + ": inconsistent CV image dimensions");
    ck.cv.d_i = static_cast<std::uint32_t>(img_in / k_plus_1);
    ck.optimizer = read_optimizer(in, ck.encoder.table.size());
    return ck;
}

} // namespace aird
