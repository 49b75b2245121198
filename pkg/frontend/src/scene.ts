/**
 * Scene-graph construction from the server's scene JSON.
 *
 * The server ships placed primitives plus the boolean ops applied to
 * them; no CSG runs client-side. Solids consumed subtractively are shown
 * translucent, unknown primitives get a placeholder mesh and a warning.
 * Coordinates are Z-up to match the modeling dialect.
 */

import * as THREE from 'three';

import type { SceneJson, ScenePart } from './types';

const BODY_COLOR = 0x7aa2c4;
const SUBTRACT_OPACITY = 0.3;
const PLACEHOLDER_COLOR = 0xcc5544;

export interface BuiltScene {
  group: THREE.Group;
  meshByPart: Map<string, THREE.Mesh>;
  warnings: string[];
}

function geometryFor(part: ScenePart): THREE.BufferGeometry | null {
  const p = part.params;
  switch (part.primitive) {
    case 'box':
      return new THREE.BoxGeometry(p.width ?? 1, p.depth ?? 1, p.height ?? 1);
    case 'sphere':
      return new THREE.SphereGeometry(p.radius ?? 1, 32, 24);
    case 'cylinder': {
      const geo = new THREE.CylinderGeometry(p.radius ?? 0.5, p.radius ?? 0.5, p.height ?? 1, 32);
      geo.rotateX(Math.PI / 2); // three cylinders run along Y; dialect is Z-up
      return geo;
    }
    case 'cone': {
      const geo = new THREE.CylinderGeometry(
        p.radius_top ?? 0.05,
        p.radius_bottom ?? 0.5,
        p.height ?? 1,
        32,
      );
      geo.rotateX(Math.PI / 2);
      return geo;
    }
    case 'torus':
      return new THREE.TorusGeometry(p.radius_ring ?? 0.8, p.radius_tube ?? 0.15, 16, 48);
    default:
      return null;
  }
}

function poseMatrix(part: ScenePart): THREE.Matrix4 {
  const b = part.pose.basis;
  const [cx, cy, cz] = part.pose.center;
  const m = new THREE.Matrix4();
  m.set(
    b[0]![0]!, b[0]![1]!, b[0]![2]!, cx,
    b[1]![0]!, b[1]![1]!, b[1]![2]!, cy,
    b[2]![0]!, b[2]![1]!, b[2]![2]!, cz,
    0, 0, 0, 1,
  );
  return m;
}

/** Ids of solids consumed subtractively by a boolean op. */
export function subtractedIds(scene: SceneJson): Set<string> {
  const subtracted = new Set<string>();
  for (const op of scene.ops) {
    if (op.op === 'difference' && op.inputs.length > 1) {
      for (const id of op.inputs.slice(1)) {
        subtracted.add(id);
      }
    }
  }
  return subtracted;
}

export function buildSceneGraph(scene: SceneJson): BuiltScene {
  const group = new THREE.Group();
  group.name = 'scene';
  const meshByPart = new Map<string, THREE.Mesh>();
  const warnings: string[] = [];
  const subtracted = subtractedIds(scene);

  for (const part of scene.parts) {
    let geometry = geometryFor(part);
    let placeholder = false;
    if (!geometry) {
      geometry = new THREE.OctahedronGeometry(0.25);
      placeholder = true;
      warnings.push(`unknown primitive '${part.primitive}' for ${part.id}`);
    }
    const translucent = subtracted.has(part.id);
    const material = new THREE.MeshStandardMaterial({
      color: placeholder ? PLACEHOLDER_COLOR : BODY_COLOR,
      transparent: translucent,
      opacity: translucent ? SUBTRACT_OPACITY : 1.0,
      roughness: 0.6,
    });
    const mesh = new THREE.Mesh(geometry, material);
    mesh.name = part.id;
    mesh.userData.placeholder = placeholder;
    mesh.matrixAutoUpdate = false;
    mesh.matrix.copy(poseMatrix(part));
    group.add(mesh);
    meshByPart.set(part.id, mesh);
  }
  return { group, meshByPart, warnings };
}

/**
 * Highlight every mesh belonging to a DSL part (mesh ids are
 * "part.subpart", so hovering the construct pane lights the solids).
 */
export function setHighlight(built: BuiltScene, partId: string | null): void {
  for (const [id, mesh] of built.meshByPart) {
    const on = partId !== null && (id === partId || id.startsWith(`${partId}.`));
    const material = mesh.material as THREE.MeshStandardMaterial;
    material.emissive.setHex(on ? 0x664400 : 0x000000);
  }
}
