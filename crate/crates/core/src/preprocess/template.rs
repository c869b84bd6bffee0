use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::gca::{GcaRegion, GcaScore, N_REGIONS};
use crate::phantom::{canonical_volume, PhantomLayout};
use crate::volume::{Mask, Volume};

use super::extract_brain;

/// Seed of the atrophy-free head the template is built from.
pub const TEMPLATE_SEED: u64 = 0x7E3D_1A7E;

/// Skull-stripped reference head plus the 13-region atlas in its space.
#[derive(Debug, Clone)]
pub struct Template {
    pub volume: Volume,
    pub brain_mask: Mask,
    pub atlas: Vec<Mask>,
}

impl Template {
    /// Template built from the zero-score, noise-free, unposed phantom.
    pub fn canonical() -> &'static Template {
        static TEMPLATE: OnceLock<Template> = OnceLock::new();
        TEMPLATE.get_or_init(|| Template::build().expect("canonical template builds"))
    }

    fn build() -> Result<Self> {
        let head = canonical_volume(&[GcaScore::new(0)?; N_REGIONS], TEMPLATE_SEED);
        let (brain_mask, volume) = extract_brain(&head)?;
        let tmpl = Self {
            volume,
            brain_mask,
            atlas: PhantomLayout::canonical().region_masks(),
        };
        tmpl.validate()?;
        Ok(tmpl)
    }

    /// Replace the intensity volume (e.g. one loaded from disk); the grid must
    /// match the atlas.
    pub fn with_volume(volume: Volume) -> Result<Self> {
        let base = Self::canonical();
        if volume.grid() != base.volume.grid() {
            return Err(Error::Input(format!(
                "template grid {:?} does not match the atlas grid {:?}",
                volume.dims(),
                base.volume.dims()
            )));
        }
        let (brain_mask, volume) = extract_brain(&volume)?;
        let tmpl = Self {
            volume,
            brain_mask,
            atlas: base.atlas.clone(),
        };
        tmpl.validate()?;
        Ok(tmpl)
    }

    pub fn region_mask(&self, region: GcaRegion) -> &Mask {
        &self.atlas[region.index()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.atlas.len() != N_REGIONS {
            return Err(Error::Input(format!("atlas has {} masks", self.atlas.len())));
        }
        let mut owner = vec![u8::MAX; self.volume.grid().len()];
        for (r, m) in self.atlas.iter().enumerate() {
            m.check_grid(self.volume.grid())?;
            if m.count() == 0 {
                return Err(Error::Input(format!("atlas mask {} is empty", GcaRegion::ALL[r])));
            }
            for i in m.indices() {
                if owner[i] != u8::MAX {
                    return Err(Error::Input(format!(
                        "atlas masks {} and {} overlap",
                        GcaRegion::ALL[owner[i] as usize],
                        GcaRegion::ALL[r]
                    )));
                }
                owner[i] = r as u8;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_template_is_valid() {
        let t = Template::canonical();
        t.validate().unwrap();
        assert_eq!(t.volume.dims(), [128; 3]);
        assert!(t.brain_mask.count() > 100_000);
        // No bone survives skull stripping.
        assert!(t.volume.data().iter().all(|&v| v < 200.0));
    }

    #[test]
    fn atlas_lies_inside_brain_mask() {
        let t = Template::canonical();
        for (r, m) in GcaRegion::ALL.iter().zip(&t.atlas) {
            let inside = m.indices().filter(|&i| t.brain_mask.get(i)).count();
            assert_eq!(inside, m.count(), "{r}");
        }
    }
}
