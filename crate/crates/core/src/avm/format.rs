//! Model file format: a versioned JSON container with the schema hash, the
//! training parameters, the base score and each tree flattened into
//! parallel arrays.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encoding::FeatureEncoder;
use super::tree::{SplitCondition, Tree, TreeNode};
use super::{AvmError, GbdtModel, TargetTransform, TrainParams};
use crate::domain::{FeatureSchema, PropertyType};

pub const MODEL_FORMAT: &str = "valuate-gbdt";
pub const MODEL_VERSION: u32 = 1;

/// Node `i` is a leaf when `feature[i] == -1`.
#[derive(Debug, Serialize, Deserialize)]
struct FlatTree {
    feature: Vec<i64>,
    threshold: Vec<f64>,
    categories: Vec<Vec<u32>>,
    default_left: Vec<bool>,
    left: Vec<i64>,
    right: Vec<i64>,
    value: Vec<f64>,
    count: Vec<usize>,
}

impl From<&Tree> for FlatTree {
    fn from(tree: &Tree) -> Self {
        let n = tree.nodes.len();
        let mut flat = FlatTree {
            feature: Vec::with_capacity(n),
            threshold: Vec::with_capacity(n),
            categories: Vec::with_capacity(n),
            default_left: Vec::with_capacity(n),
            left: Vec::with_capacity(n),
            right: Vec::with_capacity(n),
            value: Vec::with_capacity(n),
            count: Vec::with_capacity(n),
        };
        for node in &tree.nodes {
            match node {
                TreeNode::Split {
                    feature,
                    condition,
                    default_left,
                    left,
                    right,
                } => {
                    flat.feature.push(*feature as i64);
                    match condition {
                        SplitCondition::Threshold(t) => {
                            flat.threshold.push(*t);
                            flat.categories.push(Vec::new());
                        }
                        SplitCondition::Categories(c) => {
                            flat.threshold.push(0.0);
                            flat.categories.push(c.clone());
                        }
                    }
                    flat.default_left.push(*default_left);
                    flat.left.push(*left as i64);
                    flat.right.push(*right as i64);
                    flat.value.push(0.0);
                    flat.count.push(0);
                }
                TreeNode::Leaf { value, count } => {
                    flat.feature.push(-1);
                    flat.threshold.push(0.0);
                    flat.categories.push(Vec::new());
                    flat.default_left.push(true);
                    flat.left.push(-1);
                    flat.right.push(-1);
                    flat.value.push(*value);
                    flat.count.push(*count);
                }
            }
        }
        flat
    }
}

impl FlatTree {
    fn into_tree(self, encoder: &FeatureEncoder) -> Result<Tree, String> {
        let n = self.feature.len();
        let lens = [
            self.threshold.len(),
            self.categories.len(),
            self.default_left.len(),
            self.left.len(),
            self.right.len(),
            self.value.len(),
            self.count.len(),
        ];
        if n == 0 || lens.iter().any(|&l| l != n) {
            return Err("tree arrays are empty or of unequal length".into());
        }
        let child = |c: i64, parent: usize| -> Result<usize, String> {
            if c <= parent as i64 || c >= n as i64 {
                Err(format!("node {parent} has invalid child {c}"))
            } else {
                Ok(c as usize)
            }
        };
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            let f = self.feature[i];
            if f < 0 {
                nodes.push(TreeNode::Leaf {
                    value: self.value[i],
                    count: self.count[i],
                });
                continue;
            }
            let feature = f as usize;
            let encoded = encoder
                .features()
                .get(feature)
                .ok_or_else(|| format!("node {i} splits on unknown feature {f}"))?;
            let condition = if encoded.is_categorical() {
                SplitCondition::Categories(self.categories[i].clone())
            } else {
                SplitCondition::Threshold(self.threshold[i])
            };
            nodes.push(TreeNode::Split {
                feature,
                condition,
                default_left: self.default_left[i],
                left: child(self.left[i], i)?,
                right: child(self.right[i], i)?,
            });
        }
        Ok(Tree { nodes })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    property_type: PropertyType,
    schema_hash: String,
    params: TrainParams,
    base_score: f64,
    learning_rate: f64,
    target_transform: TargetTransform,
    encoder: FeatureEncoder,
    trees: Vec<FlatTree>,
}

impl GbdtModel {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            property_type: self.property_type,
            schema_hash: self.schema_hash.clone(),
            params: self.params.clone(),
            base_score: self.base_score,
            learning_rate: self.learning_rate,
            target_transform: self.target_transform,
            encoder: self.encoder.clone(),
            trees: self.trees.iter().map(FlatTree::from).collect(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    /// Parses a model and checks it against the serving schema.
    pub fn from_json(text: &str, schema: &FeatureSchema) -> Result<Self, AvmError> {
        Self::from_json_at(text, schema, Path::new("<memory>"))
    }

    fn from_json_at(text: &str, schema: &FeatureSchema, path: &Path) -> Result<Self, AvmError> {
        let format_err = |detail: String| AvmError::Format {
            path: path.to_path_buf(),
            detail,
        };
        let file: ModelFile = serde_json::from_str(text).map_err(|e| format_err(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(format_err(format!(
                "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        let expected = schema.hash();
        if file.schema_hash != expected {
            return Err(AvmError::SchemaMismatch {
                expected: file.schema_hash,
                found: expected,
            });
        }
        if file.encoder.len() != schema.len() {
            return Err(format_err("encoder does not match schema width".into()));
        }
        let trees = file
            .trees
            .into_iter()
            .map(|t| t.into_tree(&file.encoder))
            .collect::<Result<Vec<_>, _>>()
            .map_err(format_err)?;
        Ok(GbdtModel {
            property_type: file.property_type,
            schema_hash: file.schema_hash,
            base_score: file.base_score,
            learning_rate: file.learning_rate,
            target_transform: file.target_transform,
            encoder: file.encoder,
            trees,
            params: file.params,
        })
    }
}

pub fn save_model(path: &Path, model: &GbdtModel) -> Result<(), AvmError> {
    let io = |source| AvmError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    fs::write(path, model.to_json()).map_err(|source| AvmError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: &Path, schema: &FeatureSchema) -> Result<GbdtModel, AvmError> {
    let text = fs::read_to_string(path).map_err(|source| AvmError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    GbdtModel::from_json_at(&text, schema, path)
}
