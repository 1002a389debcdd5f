//! Cameras, volume rendering, the color network and image I/O.

pub mod camera;
pub mod image;
pub mod mlp;
pub mod volume;

pub use camera::{camera_ring, generate_rays, Camera, Ray, Vec3};
pub use image::{psnr, psnr_from_mse, read_ppm, write_ppm, Image, PSNR_CAP};
pub use mlp::{mlp_backward, mlp_forward, Mlp, MlpBatch};
pub use volume::{alpha, render_ray_with, sample_comb, RayOutput, RenderConfig};
