import * as THREE from 'three';
import { describe, expect, it } from 'vitest';

import { buildSceneGraph, setHighlight, subtractedIds } from '../src/scene';
import type { SceneJson } from '../src/types';

import sceneFixture from './fixtures/scene_step10.json';

const teapotScene = sceneFixture as unknown as SceneJson;

describe('scene graph construction', () => {
  it('instances every primitive from the teapot scene with its pose', () => {
    const built = buildSceneGraph(teapotScene);
    expect(built.warnings).toHaveLength(0);
    const ids = [...built.meshByPart.keys()];
    expect(ids).toContain('body.sphere_0');
    expect(ids).toContain('handle.torus_0');
    expect(ids).toContain('spout.cone_0');
    expect(built.group.children).toHaveLength(teapotScene.parts.length);
  });

  it('places the handle opposite the spout in world space', () => {
    const built = buildSceneGraph(teapotScene);
    const center = (id: string) => {
      const mesh = built.meshByPart.get(id)!;
      return new THREE.Vector3().setFromMatrixPosition(mesh.matrix);
    };
    const body = center('body.sphere_0');
    const spout = center('spout.cone_0').sub(body);
    const handle = center('handle.torus_0').sub(body);
    const azSpout = Math.atan2(spout.y, spout.x);
    const azHandle = Math.atan2(handle.y, handle.x);
    const diff = ((azHandle - azSpout) * 180) / Math.PI;
    expect(((diff % 360) + 360) % 360).toBeCloseTo(180, 6);
  });

  it('renders unknown primitives as flagged placeholders', () => {
    const scene: SceneJson = {
      parts: [
        {
          id: 'mystery.blob_0',
          primitive: 'nurbs_patch',
          params: {},
          pose: { center: [0, 0, 0], basis: [[1, 0, 0], [0, 1, 0], [0, 0, 1]] },
        },
      ],
      ops: [],
    };
    const built = buildSceneGraph(scene);
    expect(built.warnings).toHaveLength(1);
    expect(built.warnings[0]).toContain('nurbs_patch');
    expect(built.meshByPart.get('mystery.blob_0')?.userData.placeholder).toBe(true);
  });

  it('shows subtractive operands translucent', () => {
    const scene: SceneJson = {
      parts: [
        {
          id: 'outer',
          primitive: 'sphere',
          params: { radius: 1 },
          pose: { center: [0, 0, 0], basis: [[1, 0, 0], [0, 1, 0], [0, 0, 1]] },
        },
        {
          id: 'cavity',
          primitive: 'sphere',
          params: { radius: 0.5 },
          pose: { center: [0, 0, 0], basis: [[1, 0, 0], [0, 1, 0], [0, 0, 1]] },
        },
      ],
      ops: [{ op: 'difference', inputs: ['outer', 'cavity'], target: 'shell' }],
    };
    expect(subtractedIds(scene)).toEqual(new Set(['cavity']));
    const built = buildSceneGraph(scene);
    const cavity = built.meshByPart.get('cavity')!.material as THREE.MeshStandardMaterial;
    const outer = built.meshByPart.get('outer')!.material as THREE.MeshStandardMaterial;
    expect(cavity.transparent).toBe(true);
    expect(cavity.opacity).toBeLessThan(1);
    expect(outer.transparent).toBe(false);
  });

  it('links part hover to mesh highlight across subparts', () => {
    const built = buildSceneGraph(teapotScene);
    setHighlight(built, 'spout');
    const spout = built.meshByPart.get('spout.cone_0')!.material as THREE.MeshStandardMaterial;
    const body = built.meshByPart.get('body.sphere_0')!.material as THREE.MeshStandardMaterial;
    expect(spout.emissive.getHex()).not.toBe(0x000000);
    expect(body.emissive.getHex()).toBe(0x000000);
    setHighlight(built, null);
    expect(spout.emissive.getHex()).toBe(0x000000);
  });

  it('builds an empty group for an empty scene', () => {
    const built = buildSceneGraph({ parts: [], ops: [] });
    expect(built.group.children).toHaveLength(0);
    expect(built.warnings).toHaveLength(0);
  });
});
