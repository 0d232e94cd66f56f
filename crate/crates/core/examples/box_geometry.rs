//! Oriented boxes: BEV and 3D IoU, containment and yaw handling.
//!
//! cargo run --example box_geometry

use std::f64::consts::FRAC_PI_4;

use lidar_meta::geom::{iou_3d, iou_bev, normalize_yaw, LidarPoint, OrientedBox3D};

fn main() -> lidar_meta::Result<()> {
    let a = OrientedBox3D::new([0.0, 0.0, 0.0], 1.0, 1.0, 1.0, 0.0)?;
    let shifted = OrientedBox3D::new([0.5, 0.0, 0.0], 1.0, 1.0, 1.0, 0.0)?;
    let turned = OrientedBox3D::new([0.0, 0.0, 0.0], 1.0, 1.0, 1.0, FRAC_PI_4)?;
    let lifted = OrientedBox3D::new([0.0, 0.0, 0.5], 1.0, 1.0, 1.0, 0.0)?;

    println!("pair                  bev      3d");
    for (name, b) in [("half-shifted", shifted), ("turned 45 deg", turned), ("lifted 0.5", lifted)] {
        println!("{name:<20} {:.5}  {:.5}", iou_bev(&a, &b), iou_3d(&a, &b));
    }

    let big = OrientedBox3D::new([0.0, 0.0, 0.0], 2.0, 2.0, 2.0, FRAC_PI_4)?;
    for p in [LidarPoint::new(1.2, 0.0, 0.0, 0.5), LidarPoint::new(1.0, 1.0, 0.0, 0.5)] {
        println!("({}, {}, {}) inside rotated 2m cube: {}", p.x, p.y, p.z, big.contains_point(&p));
    }

    // same relative pose after a rigid motion, same overlap
    let moved = (a.rigid_motion(10.0, -3.0, 1.0), turned.rigid_motion(10.0, -3.0, 1.0));
    println!("bev after rigid motion: {:.5}", iou_bev(&moved.0, &moved.1));
    println!("yaw 4.0 normalizes to {:.5}", normalize_yaw(4.0));
    println!("volume {} surface {} bev radius {:.4}", big.volume(), big.surface_area(), big.bev_radius());
    Ok(())
}
