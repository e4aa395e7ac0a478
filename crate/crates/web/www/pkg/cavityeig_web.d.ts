/* tslint:disable */
/* eslint-disable */

export class Spectrum {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly dofs: number;
    /**
     * Interleaved re, im pairs.
     */
    readonly eigenvalues: Float64Array;
    readonly singularValues: Float64Array;
}

export function geometryLines(name: string, lines: number, samples: number): Float64Array;

export function solveSpectrum(name: string, p: number, m: number, center: number, ax: number, ay: number, nodes: number, ell: number): Spectrum;

export function splineTable(degree: number, level: number, samples: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_spectrum_free: (a: number, b: number) => void;
    readonly geometryLines: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly solveSpectrum: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number];
    readonly spectrum_dofs: (a: number) => number;
    readonly spectrum_eigenvalues: (a: number) => [number, number];
    readonly spectrum_singularValues: (a: number) => [number, number];
    readonly splineTable: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
