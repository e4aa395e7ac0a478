/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_spectrum_free: (a: number, b: number) => void;
export const geometryLines: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const solveSpectrum: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number];
export const spectrum_dofs: (a: number) => number;
export const spectrum_eigenvalues: (a: number) => [number, number];
export const spectrum_singularValues: (a: number) => [number, number];
export const splineTable: (a: number, b: number, c: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
