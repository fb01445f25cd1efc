#include <cstring>
#include <fstream>

#include <zlib.h>

#include "panet/data/dataset.hpp"

namespace panet {

namespace {

// NIfTI-1 header (348 bytes), fields we rely on.
#pragma pack(push, 1)
struct Nifti1Header {
    int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    int32_t extents;
    int16_t session_error;
    char regular;
    char dim_info;
    int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    int16_t intent_code;
    int16_t datatype;
    int16_t bitpix;
    int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    int16_t qform_code, sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4], srow_y[4], srow_z[4];
    char intent_name[16];
    char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

std::vector<char> gz_read_all(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw DataError("cannot open NIfTI file '" + path + "'");
    std::vector<char> bytes;
    char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) bytes.insert(bytes.end(), buf, buf + n);
    const bool bad = n < 0;
    gzclose(f);
    if (bad) throw DataError("failed decompressing '" + path + "'");
    return bytes;
}

}  // namespace

NiftiVolume read_nifti(const std::string& path) {
    const std::vector<char> bytes = gz_read_all(path);
    if (bytes.size() < sizeof(Nifti1Header)) throw DataError("'" + path + "' is too small to be a NIfTI file");
    Nifti1Header hdr;
    std::memcpy(&hdr, bytes.data(), sizeof(hdr));
    if (hdr.sizeof_hdr != 348 || std::strncmp(hdr.magic, "n+1", 3) != 0)
        throw DataError("'" + path + "' is not a single-file NIfTI-1 image");
    const int ndim = hdr.dim[0];
    if (ndim < 3 || hdr.dim[1] <= 0 || hdr.dim[2] <= 0 || hdr.dim[3] <= 0)
        throw DataError("'" + path + "' must contain a 3-D volume");
    for (int d = 4; d <= ndim; ++d)
        if (hdr.dim[d] > 1) throw DataError("'" + path + "': multi-volume NIfTI images are not supported");
    const int64_t nx = hdr.dim[1], ny = hdr.dim[2], nz = hdr.dim[3];
    const int64_t total = nx * ny * nz;
    const size_t offset = static_cast<size_t>(hdr.vox_offset);
    const int bytes_per = hdr.bitpix / 8;
    if (bytes.size() < offset + static_cast<size_t>(total * bytes_per))
        throw DataError("'" + path + "' is truncated");

    NiftiVolume vol;
    vol.data = FTensor({nz, ny, nx});
    const char* src = bytes.data() + offset;
    auto read_as = [&](auto sample) {
        using S = decltype(sample);
        const S* p = reinterpret_cast<const S*>(src);
        for (int64_t i = 0; i < total; ++i) vol.data[i] = static_cast<float>(p[i]);
    };
    switch (hdr.datatype) {
        case 2: read_as(uint8_t{}); break;
        case 4: read_as(int16_t{}); break;
        case 8: read_as(int32_t{}); break;
        case 16: read_as(float{}); break;
        case 64: read_as(double{}); break;
        case 512: read_as(uint16_t{}); break;
        default:
            throw DataError("'" + path + "' has unsupported datatype code " + std::to_string(hdr.datatype));
    }
    if (hdr.scl_slope != 0.0f && (hdr.scl_slope != 1.0f || hdr.scl_inter != 0.0f))
        for (int64_t i = 0; i < total; ++i) vol.data[i] = vol.data[i] * hdr.scl_slope + hdr.scl_inter;
    vol.spacing = {std::abs(hdr.pixdim[3]) > 0 ? hdr.pixdim[3] : 1.0, std::abs(hdr.pixdim[2]) > 0 ? hdr.pixdim[2] : 1.0,
                   std::abs(hdr.pixdim[1]) > 0 ? hdr.pixdim[1] : 1.0};
    vol.header.assign(bytes.data(), bytes.data() + sizeof(Nifti1Header));
    return vol;
}

void write_nifti_labels(const std::string& path, const U8Tensor& labels, const NiftiVolume& reference) {
    require(labels.rank() == 3, "write_nifti_labels: expected [Z,Y,X] labels");
    Nifti1Header hdr;
    if (reference.header.size() == sizeof(hdr)) {
        std::memcpy(&hdr, reference.header.data(), sizeof(hdr));
    } else {
        std::memset(&hdr, 0, sizeof(hdr));
        hdr.sizeof_hdr = 348;
        hdr.pixdim[0] = 1.0f;
        for (int d = 0; d < 3; ++d)
            hdr.pixdim[1 + d] =
                static_cast<float>(reference.spacing.size() == 3 ? reference.spacing[2 - d] : 1.0);
        hdr.sform_code = 1;
        hdr.srow_x[0] = hdr.pixdim[1];
        hdr.srow_y[1] = hdr.pixdim[2];
        hdr.srow_z[2] = hdr.pixdim[3];
    }
    hdr.dim[0] = 3;
    hdr.dim[1] = static_cast<int16_t>(labels.size(2));
    hdr.dim[2] = static_cast<int16_t>(labels.size(1));
    hdr.dim[3] = static_cast<int16_t>(labels.size(0));
    for (int d = 4; d < 8; ++d) hdr.dim[d] = 1;
    hdr.datatype = 2;  // uint8
    hdr.bitpix = 8;
    hdr.vox_offset = 352.0f;
    hdr.scl_slope = 1.0f;
    hdr.scl_inter = 0.0f;
    std::memcpy(hdr.magic, "n+1", 4);

    const char ext[4] = {0, 0, 0, 0};
    const bool gz = path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
    if (gz) {
        gzFile f = gzopen(path.c_str(), "wb");
        if (!f) throw DataError("cannot open '" + path + "' for writing");
        bool ok = gzwrite(f, &hdr, sizeof(hdr)) == sizeof(hdr) && gzwrite(f, ext, 4) == 4 &&
                  gzwrite(f, labels.data(), static_cast<unsigned>(labels.numel())) ==
                      static_cast<int>(labels.numel());
        gzclose(f);
        if (!ok) throw DataError("failed writing '" + path + "'");
        return;
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os.write(reinterpret_cast<const char*>(&hdr), sizeof(hdr));
    os.write(ext, 4);
    os.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.numel()));
    if (!os) throw DataError("failed writing '" + path + "'");
}

}  // namespace panet
