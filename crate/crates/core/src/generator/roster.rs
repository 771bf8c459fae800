//! Training roster: the annotated originals that donors and hosts are drawn
//! from, plus the directory validation report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nifti;
use crate::volume::{AnnotatedSample, GridShape, Spacing};

#[derive(Debug, Clone)]
enum Source {
    Memory(Arc<AnnotatedSample>),
    Files { image: PathBuf, label: PathBuf },
}

#[derive(Debug, Clone)]
pub struct RosterEntry {
    id: String,
    lesion_voxels: usize,
    total_voxels: usize,
    source: Source,
}

impl RosterEntry {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn lesion_voxels(&self) -> usize {
        self.lesion_voxels
    }

    /// A donor needs both lesion and background voxels for its distance field.
    pub fn is_eligible_donor(&self) -> bool {
        self.lesion_voxels > 0 && self.lesion_voxels < self.total_voxels
    }
}

/// Samples sorted by id, so that seeding never depends on directory order.
#[derive(Debug, Clone, Default)]
pub struct Roster {
    entries: Vec<RosterEntry>,
}

impl Roster {
    pub fn from_samples(samples: impl IntoIterator<Item = AnnotatedSample>) -> Result<Self> {
        let entries = samples
            .into_iter()
            .map(|s| RosterEntry {
                id: s.id().to_owned(),
                lesion_voxels: s.label().count(),
                total_voxels: s.shape().len(),
                source: Source::Memory(Arc::new(s)),
            })
            .collect();
        Self::sorted(entries)
    }

    /// Pairs `images_dir/<id>.nii[.gz]` with `labels_dir/<id>.nii[.gz]`.
    /// Labels are read once to count lesion voxels; images are read lazily.
    pub fn from_dirs(images_dir: &Path, labels_dir: &Path) -> Result<Self> {
        let labels: BTreeMap<String, PathBuf> = nifti::list_volumes(labels_dir)?.into_iter().collect();
        let mut entries = Vec::new();
        for (id, image) in nifti::list_volumes(images_dir)? {
            let label = labels.get(&id).ok_or_else(|| {
                Error::Config(format!("image `{id}` has no label in {}", labels_dir.display()))
            })?;
            let mask = nifti::read_mask(label)?;
            entries.push(RosterEntry {
                id,
                lesion_voxels: mask.count(),
                total_voxels: mask.shape().len(),
                source: Source::Files {
                    image,
                    label: label.clone(),
                },
            });
        }
        Self::sorted(entries)
    }

    fn sorted(mut entries: Vec<RosterEntry>) -> Result<Self> {
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = entries.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Config(format!("duplicate sample id `{}`", w[0].id)));
        }
        Ok(Roster { entries })
    }

    /// Reads every file-backed sample into memory.
    pub fn preload(self) -> Result<Self> {
        let entries = self
            .entries
            .into_iter()
            .map(|e| {
                let sample = load(&e)?;
                Ok(RosterEntry {
                    source: Source::Memory(sample),
                    ..e
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Roster { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[RosterEntry] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn load(&self, index: usize) -> Result<Arc<AnnotatedSample>> {
        load(&self.entries[index])
    }
}

fn load(entry: &RosterEntry) -> Result<Arc<AnnotatedSample>> {
    match &entry.source {
        Source::Memory(s) => Ok(Arc::clone(s)),
        Source::Files { image, label } => {
            let img = nifti::read_volume(image)?;
            let lbl = nifti::read_mask(label)?;
            Ok(Arc::new(AnnotatedSample::new(entry.id.clone(), img, lbl)?))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SampleValidation {
    pub id: String,
    pub image_path: Option<PathBuf>,
    pub label_path: Option<PathBuf>,
    pub image_shape: Option<GridShape>,
    pub label_shape: Option<GridShape>,
    pub image_spacing: Option<Spacing>,
    pub label_spacing: Option<Spacing>,
    pub shape_match: bool,
    pub spacing_match: bool,
    pub binary: bool,
    pub non_binary_values: Vec<f64>,
    pub non_binary_count: usize,
    pub lesion_voxels: usize,
    pub empty_lesion: bool,
    pub eligible_host: bool,
    pub eligible_donor: bool,
    pub issues: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub samples: Vec<SampleValidation>,
    pub eligible_hosts: usize,
    pub eligible_donors: usize,
    pub excluded: Vec<String>,
}

impl ValidationReport {
    pub fn get(&self, id: &str) -> Option<&SampleValidation> {
        self.samples.iter().find(|s| s.id == id)
    }

    pub fn is_clean(&self) -> bool {
        self.samples.iter().all(|s| s.issues.is_empty())
    }
}

/// Checks every image/label pair found in the two directories. Unreadable or
/// inconsistent files are reported per sample; only directory access fails.
pub fn validate_roster(images_dir: &Path, labels_dir: &Path) -> Result<ValidationReport> {
    let mut by_id: BTreeMap<String, SampleValidation> = BTreeMap::new();
    for (id, path) in nifti::list_volumes(images_dir)? {
        by_id.entry(id.clone()).or_default().image_path = Some(path);
    }
    for (id, path) in nifti::list_volumes(labels_dir)? {
        by_id.entry(id.clone()).or_default().label_path = Some(path);
    }

    let mut report = ValidationReport::default();
    for (id, mut s) in by_id {
        s.id = id;
        match &s.image_path {
            None => s.issues.push("missing image".into()),
            Some(p) => match nifti::read_header(p) {
                Ok(h) => {
                    s.image_shape = Some(h.shape);
                    s.image_spacing = Some(h.spacing);
                }
                Err(e) => s.issues.push(format!("image unreadable: {e}")),
            },
        }
        match &s.label_path {
            None => s.issues.push("missing label".into()),
            Some(p) => match nifti::read_values(p) {
                Ok((h, values)) => {
                    s.label_shape = Some(h.shape);
                    s.label_spacing = Some(h.spacing);
                    let (bad, count) = nifti::non_binary_values(&values);
                    s.binary = count == 0;
                    s.non_binary_values = bad;
                    s.non_binary_count = count;
                    if !s.binary {
                        s.issues.push(format!("non-binary label ({count} voxels)"));
                    }
                    s.lesion_voxels = values.iter().filter(|&&v| (v - 1.0).abs() <= nifti::LABEL_TOLERANCE).count();
                    s.empty_lesion = s.lesion_voxels == 0;
                }
                Err(e) => s.issues.push(format!("label unreadable: {e}")),
            },
        }
        if let (Some(a), Some(b)) = (s.image_shape, s.label_shape) {
            s.shape_match = a == b;
            if !s.shape_match {
                s.issues.push(format!("shape mismatch: image {a} vs label {b}"));
            }
        }
        if let (Some(a), Some(b)) = (s.image_spacing, s.label_spacing) {
            s.spacing_match = a.approx_eq(&b);
            if !s.spacing_match {
                s.issues.push("spacing mismatch".into());
            }
        }
        s.eligible_host = s.issues.is_empty();
        let total = s.label_shape.map_or(0, |g| g.len());
        s.eligible_donor = s.eligible_host && s.lesion_voxels > 0 && s.lesion_voxels < total;
        if s.eligible_host {
            report.eligible_hosts += 1;
        } else {
            report.excluded.push(s.id.clone());
        }
        report.eligible_donors += s.eligible_donor as usize;
        report.samples.push(s);
    }
    Ok(report)
}
