#include <Eigen/Dense>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <vector>

#include "cforge/cli.hpp"

namespace cforge::cli {

using fieldlab::GridDomain;
using fieldlab::ImmersionField;

void export_mesh_obj(const ImmersionField& u, const std::string& path,
                     const std::string& projection) {
    require(u.domain().n == 2, Error::Code::Precondition,
            "export_mesh_obj: unsupported projection, only n=2 immersions embed as surfaces");
    require(projection == "first-3-coords" || projection == "pca3", Error::Code::Config,
            "export_mesh_obj: projection must be first-3-coords or pca3");
    const GridDomain& dom = u.domain();
    const int N = dom.points_per_axis;
    const int d = u.d();

    // vertex per grid point with the periodic seam duplicated: (N+1)^2 points
    std::vector<Eigen::VectorXd> verts;
    verts.reserve(static_cast<std::size_t>(N + 1) * (N + 1));
    for (int i = 0; i <= N; ++i)
        for (int j = 0; j <= N; ++j) {
            const int coords[2] = {i % N, j % N};
            const std::size_t p = dom.flatten(coords);
            Eigen::Vector2d x(dom.coord(i), dom.coord(j));  // unwrapped, so the seam offsets
            verts.push_back(u.affine() * x + u.periodic().vec(p));
        }

    std::vector<Eigen::Vector3d> pts(verts.size());
    if (projection == "first-3-coords") {
        for (std::size_t k = 0; k < verts.size(); ++k) pts[k] = verts[k].head(3);
    } else {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
        for (const auto& v : verts) mean += v;
        mean /= static_cast<double>(verts.size());
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
        for (const auto& v : verts) cov += (v - mean) * (v - mean).transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        // top three principal directions (eigenvalues ascend in Eigen)
        Eigen::MatrixXd top(d, 3);
        for (int c = 0; c < 3; ++c) top.col(c) = es.eigenvectors().col(d - 1 - c);
        for (std::size_t k = 0; k < verts.size(); ++k) pts[k] = top.transpose() * (verts[k] - mean);
    }

    std::ofstream out(path);
    require(out.good(), Error::Code::Config, "export_mesh_obj: cannot open " + path);
    char buf[128];
    for (const auto& p : pts) {
        require(p.allFinite(), Error::Code::Numeric, "export_mesh_obj: non-finite vertex");
        std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", p.x(), p.y(), p.z());
        out << buf;
    }
    // two triangles per cell, 1-based indices
    const int stride = N + 1;
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            const int a = i * stride + j + 1;
            const int b = (i + 1) * stride + j + 1;
            const int c = (i + 1) * stride + j + 2;
            const int e = i * stride + j + 2;
            out << "f " << a << ' ' << b << ' ' << c << '\n';
            out << "f " << a << ' ' << c << ' ' << e << '\n';
        }
    require(out.good(), Error::Code::Config, "export_mesh_obj: write failure on " + path);
}

int cmd_export_mesh(const std::string& snapshot_path, const std::string& out_path,
                    const std::string& projection, std::ostream& log) {
    try {
        const ImmersionField u = fieldlab::load_immersion_snapshot(snapshot_path);
        export_mesh_obj(u, out_path, projection);
        log << "wrote " << out_path << "\n";
        return 0;
    } catch (const Error& e) {
        log << "error: " << e.what() << "\n";
        return e.exit_code();
    }
}

}  // namespace cforge::cli
