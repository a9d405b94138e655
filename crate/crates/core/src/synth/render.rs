//! Deterministic rasterization of an attribute assignment: a total function
//! of (assignment, noise, params). Identical inputs yield identical bytes.

use super::glyphs::{glyph_bit, GLYPH_H, GLYPH_W};
use super::{Assignment, Image, RenderNoise, RenderParams};
use crate::spec::{AttributeRole, AttributeSchema};

pub const TEXTURE_COUNT: usize = 5;

const DEFAULT_FOREGROUND: [u8; 3] = [235, 235, 235];
const DEFAULT_BACKGROUND: [u8; 3] = [0, 0, 0];

/// Whether the texture pattern is "on" at pixel (x, y). Pattern 0 is solid;
/// 1/2 are horizontal/vertical stripes, 3 is a checkerboard, 4 diagonal
/// stripes. `phase` translates the pattern.
pub fn texture_on(pattern: usize, x: usize, y: usize, period: usize, phase: usize) -> bool {
    let band = (period / 2).max(1);
    match pattern {
        0 => true,
        1 => ((y + phase) / band) % 2 == 0,
        2 => ((x + phase) / band) % 2 == 0,
        3 => (((x + phase) / band) + ((y + phase) / band)) % 2 == 0,
        _ => (((x + y + phase) / band) % 2) == 0,
    }
}

fn dim(rgb: [u8; 3]) -> [u8; 3] {
    [
        (rgb[0] as u16 * 2 / 5) as u8,
        (rgb[1] as u16 * 2 / 5) as u8,
        (rgb[2] as u16 * 2 / 5) as u8,
    ]
}

/// Glyph mask for one class: scaled to the canvas, dilated by `radius`,
/// translated by the jitter offsets with clipping at the canvas edge.
fn glyph_mask(side: usize, class: usize, radius: usize, dx: i32, dy: i32) -> Vec<bool> {
    let scale = (side / 8).max(1);
    let ox = (side as i32 - (GLYPH_W * scale) as i32) / 2 + dx;
    let oy = (side as i32 - (GLYPH_H * scale) as i32) / 2 + dy;

    let mut base = vec![false; side * side];
    for gy in 0..GLYPH_H {
        for gx in 0..GLYPH_W {
            if !glyph_bit(class, gx, gy) {
                continue;
            }
            for sy in 0..scale {
                for sx in 0..scale {
                    let x = ox + (gx * scale + sx) as i32;
                    let y = oy + (gy * scale + sy) as i32;
                    if x >= 0 && y >= 0 && (x as usize) < side && (y as usize) < side {
                        base[y as usize * side + x as usize] = true;
                    }
                }
            }
        }
    }
    if radius == 0 {
        return base;
    }

    let r = radius as i32;
    let mut dilated = vec![false; side * side];
    for y in 0..side as i32 {
        for x in 0..side as i32 {
            'scan: for wy in -r..=r {
                for wx in -r..=r {
                    let (nx, ny) = (x + wx, y + wy);
                    if nx >= 0
                        && ny >= 0
                        && (nx as usize) < side
                        && (ny as usize) < side
                        && base[ny as usize * side + nx as usize]
                    {
                        dilated[y as usize * side + x as usize] = true;
                        break 'scan;
                    }
                }
            }
        }
    }
    dilated
}

/// Renders one assignment under the recorded noise. Total over validated
/// specs; the same inputs always produce byte-identical images.
pub fn render(
    schema: &AttributeSchema,
    params: &RenderParams,
    assignment: &Assignment,
    noise: &RenderNoise,
) -> Image {
    let side = params.side;
    let class = assignment.value(schema.label_index());
    let thickness = schema
        .role_index(AttributeRole::Thickness)
        .map(|i| assignment.value(i))
        .unwrap_or(0);
    let radius = params.dilation_radii[thickness.min(params.dilation_radii.len() - 1)];
    let mask = glyph_mask(side, class, radius, noise.dx, noise.dy);

    let fg = schema
        .role_index(AttributeRole::ForegroundColor)
        .map(|i| params.palette[assignment.value(i)])
        .unwrap_or(DEFAULT_FOREGROUND);
    let bg = schema
        .role_index(AttributeRole::BackgroundColor)
        .map(|i| params.background_palette[assignment.value(i)])
        .unwrap_or(DEFAULT_BACKGROUND);
    let pattern = schema
        .role_index(AttributeRole::Texture)
        .map(|i| assignment.value(i))
        .unwrap_or(0);
    let fg_dim = dim(fg);
    let phase = noise.phase as usize;

    let mut image = Image::new(side);
    for y in 0..side {
        for x in 0..side {
            let rgb = if mask[y * side + x] {
                if texture_on(pattern, x, y, params.texture_period, phase) {
                    fg
                } else {
                    fg_dim
                }
            } else {
                bg
            };
            image.set_pixel(x, y, rgb);
        }
    }
    image
}

/// Brute-force decoder: re-renders every candidate value of `attr` with the
/// sample's other attributes and recorded noise fixed, and returns the value
/// whose bytes match. Determinism of the mechanism makes this exact.
pub fn recover_attribute(
    schema: &AttributeSchema,
    params: &RenderParams,
    sample: &super::Sample,
    attr: &str,
) -> Option<usize> {
    let idx = schema.index_of(attr)?;
    let cardinality = schema.attributes[idx].cardinality;
    (0..cardinality).find(|&candidate| {
        let mut assignment = sample.assignment.clone();
        assignment.0[idx] = candidate;
        render(schema, params, &assignment, &sample.noise) == sample.image
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{preset_spec, Preset};

    fn noise() -> RenderNoise {
        RenderNoise {
            dx: 1,
            dy: -1,
            phase: 2,
            draw_seed: 99,
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let spec = preset_spec(Preset::Dcm, 10, 0.9, 16, 3);
        let assignment = Assignment(vec![7, 2, 4, 1]);
        let a = render(&spec.schema, &spec.render, &assignment, &noise());
        let b = render(&spec.schema, &spec.render, &assignment, &noise());
        assert_eq!(a, b);
    }

    #[test]
    fn thick_glyph_has_strictly_more_foreground() {
        let spec = preset_spec(Preset::Cm, 10, 0.9, 16, 3);
        let thin = Assignment(vec![3, 0, 0]);
        let thick = Assignment(vec![3, 0, 1]);
        let bg = [0u8, 0, 0];
        let count = |img: &Image| {
            (0..16)
                .flat_map(|y| (0..16).map(move |x| (x, y)))
                .filter(|&(x, y)| img.pixel(x, y) != bg)
                .count()
        };
        let thin_img = render(&spec.schema, &spec.render, &thin, &noise());
        let thick_img = render(&spec.schema, &spec.render, &thick, &noise());
        assert!(count(&thick_img) > count(&thin_img));
    }

    #[test]
    fn foreground_change_leaves_background_bytes_untouched() {
        let spec = preset_spec(Preset::Cm, 10, 0.9, 16, 3);
        let a = render(&spec.schema, &spec.render, &Assignment(vec![5, 1, 1]), &noise());
        let b = render(&spec.schema, &spec.render, &Assignment(vec![5, 8, 1]), &noise());
        let bg = [0u8, 0, 0];
        for y in 0..16 {
            for x in 0..16 {
                if a.pixel(x, y) == bg {
                    assert_eq!(b.pixel(x, y), bg, "background pixel ({x},{y}) changed");
                }
            }
        }
        assert_ne!(a, b);
    }

    #[test]
    fn textures_are_distinguishable() {
        let spec = preset_spec(Preset::Wlm, 10, 0.9, 16, 3);
        let images: Vec<Image> = (0..TEXTURE_COUNT)
            .map(|t| {
                render(
                    &spec.schema,
                    &spec.render,
                    &Assignment(vec![8, t, 3, 0]),
                    &noise(),
                )
            })
            .collect();
        for a in 0..images.len() {
            for b in (a + 1)..images.len() {
                assert_ne!(images[a], images[b], "textures {a} and {b} render identically");
            }
        }
    }

    #[test]
    fn jitter_clips_at_canvas_edge_without_panic() {
        let spec = preset_spec(Preset::Cm, 10, 0.9, 16, 3);
        for dx in [-2, 0, 2] {
            for dy in [-2, 0, 2] {
                let n = RenderNoise {
                    dx,
                    dy,
                    phase: 0,
                    draw_seed: 0,
                };
                render(&spec.schema, &spec.render, &Assignment(vec![8, 0, 1]), &n);
            }
        }
    }
}
