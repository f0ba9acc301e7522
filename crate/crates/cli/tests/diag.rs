//! Throwaway diagnostic for the Julia staircase-mesh eigensolve.

use rough_resonance_core::geometry::{
    ball_polygon, pixelate, trace_pixel_boundary, ObstacleSpec,
};
use rough_resonance_core::mesh::{build_mesh, mesh_quality};
use rough_resonance_core::ntd::build_model;
use rough_resonance_core::C64;
use std::f64::consts::TAU;

#[test]
#[ignore]
fn julia_mesh_probe() {
    let h = 0.1;
    let spec = ObstacleSpec::Julia {
        c: C64::new(-0.0, 0.0),
        max_iter: 128,
        bailout: 2.0,
        scale: 0.5,
        center: [0.0, 0.0],
    };
    let px = pixelate(&spec, 64).unwrap();
    let polys = trace_pixel_boundary(&px).unwrap();
    println!("polygons: {}", polys.len());
    for p in &polys {
        println!("  corners: {}", p.points.len());
    }
    let m_b = ((TAU / (0.4 * h)).ceil() as usize).max(16);
    let mesh = build_mesh(&polys, &ball_polygon(1.0, m_b).unwrap(), h).unwrap();
    let (c_theta, hw, d_n) = mesh_quality(&mesh);
    println!("mesh: c_theta {c_theta:.2} width {hw:.4} d_n {d_n}");
    let mut amin = f64::INFINITY;
    let mut amax = 0.0f64;
    for t in 0..mesh.triangles.len() {
        let a = mesh.triangle_area(t);
        amin = amin.min(a);
        amax = amax.max(a);
    }
    println!("area ratio {:.2e} ({amin:.2e} .. {amax:.2e})", amax / amin);
    match build_model(&mesh, C64::new(-1.0, -1.0), 6, 60) {
        Ok(m) => println!("model ok: d_n {}", m.d_n),
        Err(e) => println!("model FAILED: {e}"),
    }
}
