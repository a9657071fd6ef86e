//! Node kinds, their fields and defaults, and container-field rules.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{FieldValue, Rotation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FieldType {
    SFFloat,
    SFVec3f,
    SFRotation,
    SFMatrix3f,
    SFMatrix4f,
    SFString,
    SFColor,
    MFFloat,
}

impl FieldType {
    /// Number of numeric components, `None` for variable-length or string
    /// fields.
    pub fn arity(self) -> Option<usize> {
        match self {
            FieldType::SFFloat => Some(1),
            FieldType::SFVec3f | FieldType::SFColor => Some(3),
            FieldType::SFRotation => Some(4),
            FieldType::SFMatrix3f => Some(9),
            FieldType::SFMatrix4f => Some(16),
            FieldType::SFString | FieldType::MFFloat => None,
        }
    }
}

impl fmt::Display for FieldType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Scene,
    Group,
    Transform,
    Shape,
    Appearance,
    Material,
    FrictionalSurface,
    Sphere,
    Cylinder,
    Box,
    DeviceInfo,
    HLHapticsDevice,
    DynamicTransform,
    Inline,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.element_name())
    }
}

pub struct FieldSpec {
    pub name: &'static str,
    pub ty: FieldType,
    default: DefaultValue,
}

enum DefaultValue {
    Float(f64),
    Vec3([f64; 3]),
    Rotation,
    Matrix3([f64; 9]),
    Matrix4([f64; 16]),
    Str(&'static str),
}

impl FieldSpec {
    const fn new(name: &'static str, ty: FieldType, default: DefaultValue) -> Self {
        FieldSpec { name, ty, default }
    }

    pub fn default_value(&self) -> FieldValue {
        match (&self.default, self.ty) {
            (DefaultValue::Float(v), _) => FieldValue::SFFloat(*v),
            (DefaultValue::Vec3(v), FieldType::SFColor) => FieldValue::SFColor(*v),
            (DefaultValue::Vec3(v), _) => FieldValue::SFVec3f(*v),
            (DefaultValue::Rotation, _) => FieldValue::SFRotation(Rotation::IDENTITY),
            (DefaultValue::Matrix3(m), _) => FieldValue::SFMatrix3f(*m),
            (DefaultValue::Matrix4(m), _) => FieldValue::SFMatrix4f(*m),
            (DefaultValue::Str(s), _) => FieldValue::SFString((*s).to_string()),
        }
    }
}

use DefaultValue as D;
use FieldType as T;

const IDENTITY4: [f64; 16] = [
    1.0, 0.0, 0.0, 0.0, //
    0.0, 1.0, 0.0, 0.0, //
    0.0, 0.0, 1.0, 0.0, //
    0.0, 0.0, 0.0, 1.0,
];

const DEFAULT_INERTIA: [f64; 9] = [0.1, 0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 0.1];

const TRANSFORM_FIELDS: &[FieldSpec] = &[
    FieldSpec::new("translation", T::SFVec3f, D::Vec3([0.0; 3])),
    FieldSpec::new("rotation", T::SFRotation, D::Rotation),
];

const DYNAMIC_TRANSFORM_FIELDS: &[FieldSpec] = &[
    FieldSpec::new("translation", T::SFVec3f, D::Vec3([0.0; 3])),
    FieldSpec::new("rotation", T::SFRotation, D::Rotation),
    FieldSpec::new("mass", T::SFFloat, D::Float(1.0)),
    FieldSpec::new("inertiaTensor", T::SFMatrix3f, D::Matrix3(DEFAULT_INERTIA)),
    FieldSpec::new("linearVelocity", T::SFVec3f, D::Vec3([0.0; 3])),
    FieldSpec::new("angularVelocity", T::SFVec3f, D::Vec3([0.0; 3])),
];

const MATERIAL_FIELDS: &[FieldSpec] = &[
    FieldSpec::new("ambientIntensity", T::SFFloat, D::Float(0.2)),
    FieldSpec::new("diffuseColor", T::SFColor, D::Vec3([0.8, 0.8, 0.8])),
    FieldSpec::new("emissiveColor", T::SFColor, D::Vec3([0.0; 3])),
    FieldSpec::new("shininess", T::SFFloat, D::Float(0.2)),
    FieldSpec::new("specularColor", T::SFColor, D::Vec3([0.0; 3])),
    FieldSpec::new("transparency", T::SFFloat, D::Float(0.0)),
];

/// `stiffness` is absolute, in N/m.
const FRICTIONAL_SURFACE_FIELDS: &[FieldSpec] = &[
    FieldSpec::new("stiffness", T::SFFloat, D::Float(300.0)),
    FieldSpec::new("damping", T::SFFloat, D::Float(0.0)),
    FieldSpec::new("staticFriction", T::SFFloat, D::Float(0.1)),
    FieldSpec::new("dynamicFriction", T::SFFloat, D::Float(0.4)),
];

const SPHERE_FIELDS: &[FieldSpec] = &[FieldSpec::new("radius", T::SFFloat, D::Float(1.0))];

const CYLINDER_FIELDS: &[FieldSpec] = &[
    FieldSpec::new("radius", T::SFFloat, D::Float(1.0)),
    FieldSpec::new("height", T::SFFloat, D::Float(2.0)),
];

const BOX_FIELDS: &[FieldSpec] = &[FieldSpec::new("size", T::SFVec3f, D::Vec3([2.0; 3]))];

const HAPTICS_DEVICE_FIELDS: &[FieldSpec] = &[
    FieldSpec::new("positionCalibration", T::SFMatrix4f, D::Matrix4(IDENTITY4)),
    FieldSpec::new("deviceName", T::SFString, D::Str("")),
];

const INLINE_FIELDS: &[FieldSpec] = &[FieldSpec::new("url", T::SFString, D::Str(""))];

impl NodeKind {
    pub const ALL: [NodeKind; 14] = [
        NodeKind::Scene,
        NodeKind::Group,
        NodeKind::Transform,
        NodeKind::Shape,
        NodeKind::Appearance,
        NodeKind::Material,
        NodeKind::FrictionalSurface,
        NodeKind::Sphere,
        NodeKind::Cylinder,
        NodeKind::Box,
        NodeKind::DeviceInfo,
        NodeKind::HLHapticsDevice,
        NodeKind::DynamicTransform,
        NodeKind::Inline,
    ];

    pub fn element_name(self) -> &'static str {
        match self {
            NodeKind::Scene => "Scene",
            NodeKind::Group => "Group",
            NodeKind::Transform => "Transform",
            NodeKind::Shape => "Shape",
            NodeKind::Appearance => "Appearance",
            NodeKind::Material => "Material",
            NodeKind::FrictionalSurface => "FrictionalSurface",
            NodeKind::Sphere => "Sphere",
            NodeKind::Cylinder => "Cylinder",
            NodeKind::Box => "Box",
            NodeKind::DeviceInfo => "DeviceInfo",
            NodeKind::HLHapticsDevice => "HLHapticsDevice",
            NodeKind::DynamicTransform => "DynamicTransform",
            NodeKind::Inline => "Inline",
        }
    }

    pub fn from_element_name(name: &str) -> Option<Self> {
        NodeKind::ALL.into_iter().find(|k| k.element_name() == name)
    }

    pub fn field_specs(self) -> &'static [FieldSpec] {
        match self {
            NodeKind::Transform => TRANSFORM_FIELDS,
            NodeKind::DynamicTransform => DYNAMIC_TRANSFORM_FIELDS,
            NodeKind::Material => MATERIAL_FIELDS,
            NodeKind::FrictionalSurface => FRICTIONAL_SURFACE_FIELDS,
            NodeKind::Sphere => SPHERE_FIELDS,
            NodeKind::Cylinder => CYLINDER_FIELDS,
            NodeKind::Box => BOX_FIELDS,
            NodeKind::HLHapticsDevice => HAPTICS_DEVICE_FIELDS,
            NodeKind::Inline => INLINE_FIELDS,
            NodeKind::Scene
            | NodeKind::Group
            | NodeKind::Shape
            | NodeKind::Appearance
            | NodeKind::DeviceInfo => &[],
        }
    }

    pub fn field_spec(self, name: &str) -> Option<&'static FieldSpec> {
        self.field_specs().iter().find(|s| s.name == name)
    }

    pub fn is_geometry(self) -> bool {
        matches!(self, NodeKind::Sphere | NodeKind::Cylinder | NodeKind::Box)
    }

    /// Kinds whose local frame contributes to the world transform.
    pub fn is_transform(self) -> bool {
        matches!(self, NodeKind::Transform | NodeKind::DynamicTransform)
    }

    pub fn default_container_field(self) -> &'static str {
        match self {
            NodeKind::Appearance => "appearance",
            NodeKind::Material => "material",
            NodeKind::FrictionalSurface => "surface",
            NodeKind::Sphere | NodeKind::Cylinder | NodeKind::Box => "geometry",
            NodeKind::HLHapticsDevice => "device",
            _ => "children",
        }
    }

    /// Whether a child of kind `child` may sit in this node's
    /// `container_field`.
    pub fn accepts(self, container_field: &str, child: NodeKind) -> bool {
        let grouping_child = matches!(
            child,
            NodeKind::Group
                | NodeKind::Transform
                | NodeKind::DynamicTransform
                | NodeKind::Shape
                | NodeKind::DeviceInfo
                | NodeKind::Inline
        );
        match (self, container_field) {
            (
                NodeKind::Scene
                | NodeKind::Group
                | NodeKind::Transform
                | NodeKind::DynamicTransform,
                "children",
            ) => grouping_child,
            (NodeKind::Shape, "appearance") => child == NodeKind::Appearance,
            (NodeKind::Shape, "geometry") => child.is_geometry(),
            (NodeKind::Appearance, "material") => child == NodeKind::Material,
            (NodeKind::Appearance, "surface") => child == NodeKind::FrictionalSurface,
            (NodeKind::DeviceInfo, "device") => child == NodeKind::HLHapticsDevice,
            (NodeKind::HLHapticsDevice, "stylus") => {
                matches!(
                    child,
                    NodeKind::Group | NodeKind::Transform | NodeKind::Shape
                )
            }
            _ => false,
        }
    }
}
