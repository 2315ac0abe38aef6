//! Per-channel heatmap PNGs.

use convscope_core::colormap::render_plane;
use convscope_core::introspect::{color_scales, scale_for_layer};
use convscope_core::{ColorScale, InferenceSession, Scope, Tensor3};

use crate::image::encode_png;
use crate::{Error, Result};

pub struct RenderedChannel {
    pub file_name: String,
    pub png: Vec<u8>,
}

/// RGB bytes of one channel plane, each pixel repeated into a `scale`×`scale` block.
pub fn heatmap_rgb(t: &Tensor3, channel: usize, scale: &ColorScale, upscale: usize) -> Result<Vec<u8>> {
    let colors = render_plane(&t.plane(channel)?, scale);
    let (h, w) = (t.height(), t.width());
    let mut out = Vec::with_capacity(h * w * upscale * upscale * 3);
    for y in 0..h * upscale {
        for x in 0..w * upscale {
            out.extend_from_slice(&colors[(y / upscale) * w + x / upscale]);
        }
    }
    Ok(out)
}

/// One PNG per channel of `layer`, colored with the scale covering it in `scope`.
pub fn render_layer(session: &InferenceSession, layer: &str, scope: Scope, upscale: usize) -> Result<Vec<RenderedChannel>> {
    if upscale == 0 {
        return Err(Error::Invalid("--scale must be at least 1".into()));
    }
    let act = session.activation(layer)?;
    let scales = color_scales(session, scope);
    let scale = scale_for_layer(&scales, layer).expect("every layer belongs to one scale");
    (0..act.channels())
        .map(|c| {
            let rgb = heatmap_rgb(act, c, scale, upscale)?;
            Ok(RenderedChannel {
                file_name: format!("{layer}_{c:02}.png"),
                png: encode_png(act.width() * upscale, act.height() * upscale, &rgb)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use convscope_core::colormap::{NEGATIVE_END, WHITE};
    use convscope_core::Shape;

    #[test]
    fn upscales_nearest_neighbour() {
        let t = Tensor3::from_vec(Shape::new(1, 2, 1), vec![-1.0, 0.0]).unwrap();
        let scale = ColorScale::new(Scope::Layer, "l".into(), vec!["l".into()], 1.0);
        let rgb = heatmap_rgb(&t, 0, &scale, 2).unwrap();
        let px: Vec<[u8; 3]> = rgb.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        assert_eq!(px, vec![NEGATIVE_END, NEGATIVE_END, WHITE, WHITE, NEGATIVE_END, NEGATIVE_END, WHITE, WHITE]);
    }
}
